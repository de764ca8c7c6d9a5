"""End-to-end demo on the mock backend: build a synthetic dataset, run the
pipeline and the zero-shot baseline, judge both, and print a report.

Every step goes through the real CLI so the printed commands are exactly
what a live run would use (swap the backend config for an http one).
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

from punchline.cli import main as punchline_main


def run(argv: list[str]) -> None:
    print(f"$ punchline {' '.join(argv)}")
    code = punchline_main(argv)
    if code != 0:
        sys.exit(code)
    print()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("demo_out"))
    parser.add_argument("--n", type=int, default=6)
    parser.add_argument("--hops", type=int, default=2)
    parser.add_argument("--k", type=int, default=3)
    args = parser.parse_args()

    workdir = args.workdir
    workdir.mkdir(parents=True, exist_ok=True)
    dataset = workdir / "dataset.jsonl"
    backend = workdir / "backend_mock.json"
    backend.write_text(json.dumps({"kind": "mock"}), encoding="utf-8")

    subprocess.run(
        [sys.executable, str(Path(__file__).with_name("make_synthetic_dataset.py")),
         "--out", str(dataset), "--n", str(args.n)],
        check=True,
    )

    common = ["--dataset", str(dataset), "--backend", str(backend),
              "--n", str(args.n), "--cache-dir", str(workdir / "cache")]
    pipeline_records = workdir / "pipeline.jsonl"
    zs_records = workdir / "zs.jsonl"

    run(["run", *common, "--hops", str(args.hops), "--k", str(args.k),
         "--out", str(pipeline_records)])
    run(["baseline", *common, "--mode", "zs", "--out", str(zs_records)])

    scores = []
    for name, records in [("pipeline", pipeline_records), ("zs", zs_records)]:
        out = workdir / f"scores_{name}.json"
        scores.append(out)
        run(["eval", "--records", str(records), "--dataset", str(dataset),
             "--backend", str(backend), "--out", str(out)])

    run(["report", "--scores", *map(str, scores)])
    run(["attribute", "--records", str(pipeline_records),
         "--dataset", str(dataset), "--backend", str(backend), "--ratio", "0.05"])
    print(f"artifacts in {workdir}/")


if __name__ == "__main__":
    main()
