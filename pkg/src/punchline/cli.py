"""Command-line surface.

Subcommands: `run` (the hop pipeline over a dataset sample), `baseline`
(zs/cot/sr/sr_noc), `eval` (LLM-judge scoring of a records file against
dataset references), `attribute` (sentence-level attribution of a record's
final prompt), `ablate-alpha` (the pipeline swept over a fixed alpha grid),
and `report` (cross-split aggregation of eval outputs).

Credentials are never read from config files; an HTTP backend config names
an environment variable and the token is read from there at call time.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .attribution import sentence_shap, split_sentences
from .backends import BackendConfig, Backends, build_backends
from .cache import ResponseCache
from .data import load_dataset, sample_split
from .errors import InputError, PunchlineError, UnscorableError
from .evaluation import aggregate_splits, score_instance, split_aggregate
from .pipeline import BASELINE_MODES, run_baseline, run_episode
from .prompting import TemplateSet
from .records import EpisodeRecord, RecordWriter, read_records
from .types import Episode, InstanceScore, PipelineConfig

log = logging.getLogger(__name__)

ALPHA_GRID = (0.0, 0.3, 0.7, 1.0)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="dataset JSONL path")
    parser.add_argument("--n", type=int, default=100, help="episodes to sample")
    parser.add_argument("--seed", type=int, default=0, help="sampling and generation seed")
    parser.add_argument("--hops", type=int, default=2)
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--alpha", type=float, default=0.7)
    parser.add_argument("--out", required=True, help="records JSONL path")
    _add_backend_flags(parser)


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", help="backend config JSON path (default: mocks)")
    parser.add_argument("--cache-dir", help="response cache directory")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--templates-dir", help="prompt template directory override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="punchline", description="Explain multimodal humor via selected implications."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run the pipeline over a dataset sample")
    _add_run_flags(run)

    baseline = commands.add_parser("baseline", help="run a single-pass baseline")
    baseline.add_argument("--mode", required=True, choices=BASELINE_MODES)
    _add_run_flags(baseline)

    ablate = commands.add_parser(
        "ablate-alpha", help=f"run the pipeline at alpha in {ALPHA_GRID}"
    )
    _add_run_flags(ablate)

    evaluate = commands.add_parser("eval", help="judge a records file against references")
    evaluate.add_argument("--records", required=True, help="records JSONL path")
    evaluate.add_argument("--dataset", required=True, help="dataset JSONL with references")
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--out", help="scores JSON path (default: stdout)")
    _add_backend_flags(evaluate)

    attribute = commands.add_parser(
        "attribute", help="sentence-level attribution of a record's final prompt"
    )
    attribute.add_argument("--records", required=True)
    attribute.add_argument("--episode-id", help="default: first record with a final prompt")
    attribute.add_argument("--dataset", help="supplies the episode image when given")
    attribute.add_argument("--ratio", type=float, default=1.0)
    attribute.add_argument("--seed", type=int, default=0)
    attribute.add_argument("--out", help="attribution JSON path (default: stdout)")
    _add_backend_flags(attribute)

    report = commands.add_parser("report", help="aggregate eval outputs across splits")
    report.add_argument("--scores", required=True, nargs="+", help="eval output JSON paths")
    report.add_argument("--out", help="report JSON path (default: stdout)")

    return parser


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        alpha=getattr(args, "alpha", 0.7),
        hops=getattr(args, "hops", 2),
        k=getattr(args, "k", 3),
        rng_seed=args.seed,
    )


def _backends(args: argparse.Namespace) -> Backends:
    if args.backend:
        try:
            config = BackendConfig.from_dict(json.loads(Path(args.backend).read_text()))
        except (OSError, ValueError) as exc:
            raise InputError(f"bad backend config {args.backend}: {exc}") from exc
    else:
        config = BackendConfig()
    cache = ResponseCache(args.cache_dir) if args.cache_dir else None
    return build_backends(config, cache=cache)


def _sampled_episodes(args: argparse.Namespace) -> list[Episode]:
    episodes = load_dataset(args.dataset)
    if not episodes:
        raise InputError(f"dataset {args.dataset} has no usable episodes")
    return sample_split(episodes, args.n, args.seed)


def _write_records(
    episodes: Sequence[Episode],
    out: str | Path,
    workers: int,
    runner,
) -> dict[str, int]:
    """Fan episodes out to a worker pool; one writer drains results in
    submission order so the output is deterministic for any worker count."""
    counts = {"ok": 0, "partial": 0, "failed": 0}
    with RecordWriter(out) as writer:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            futures = [pool.submit(runner, episode) for episode in episodes]
            for future in futures:
                record = future.result()
                counts[record.status] += 1
                writer.write(record)
    return counts


def _summary(counts: dict[str, int], out: str | Path) -> str:
    total = sum(counts.values())
    return (
        f"wrote {total} records to {out} "
        f"(ok {counts['ok']}, partial {counts['partial']}, failed {counts['failed']})"
    )


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    backends = _backends(args)
    templates = TemplateSet.load(args.templates_dir)
    episodes = _sampled_episodes(args)
    counts = _write_records(
        episodes, args.out, args.workers,
        lambda ep: run_episode(ep, cfg, backends, templates),
    )
    print(_summary(counts, args.out))
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    backends = _backends(args)
    templates = TemplateSet.load(args.templates_dir)
    episodes = _sampled_episodes(args)
    counts = _write_records(
        episodes, args.out, args.workers,
        lambda ep: run_baseline(ep, args.mode, cfg, backends, templates),
    )
    print(f"[{args.mode}] " + _summary(counts, args.out))
    return 0


def cmd_ablate_alpha(args: argparse.Namespace) -> int:
    backends = _backends(args)
    templates = TemplateSet.load(args.templates_dir)
    episodes = _sampled_episodes(args)
    base_cfg = _pipeline_config(args)
    out = Path(args.out)
    for alpha in ALPHA_GRID:
        cfg = replace(base_cfg, alpha=alpha)
        alpha_out = out.with_name(f"{out.stem}_alpha{alpha}{out.suffix or '.jsonl'}")
        counts = _write_records(
            episodes, alpha_out, args.workers,
            lambda ep: run_episode(ep, cfg, backends, templates),
        )
        print(f"[alpha={alpha}] " + _summary(counts, alpha_out))
    return 0


def _eval_descriptions(record: EpisodeRecord) -> list[str]:
    if not record.hop_states:
        return []
    return [d.text for d in record.hop_states[-1].descriptions]


def cmd_eval(args: argparse.Namespace) -> int:
    backends = _backends(args)
    templates = TemplateSet.load(args.templates_dir)
    cfg = PipelineConfig(rng_seed=args.seed)
    episodes = {e.id: e for e in load_dataset(args.dataset)}
    scores: list[InstanceScore] = []
    n_unscorable = 0
    for record in read_records(args.records):
        episode = episodes.get(record.episode_id)
        if record.final_answer is None or episode is None or not episode.references:
            log.warning("record %s not scorable, skipped", record.episode_id)
            n_unscorable += 1
            continue
        try:
            scores.append(
                score_instance(
                    record.episode_id, record.final_answer, episode.references,
                    _eval_descriptions(record), backends.generator, templates, cfg,
                )
            )
        except UnscorableError as exc:
            log.warning("%s", exc)
            n_unscorable += 1
    if not scores:
        raise InputError(f"no scorable records in {args.records}")
    split = split_aggregate(scores, n_unscorable=n_unscorable)
    payload = {
        "split": split.to_dict(),
        "per_instance": [s.to_dict() for s in scores],
    }
    _emit(payload, args.out)
    print(
        f"scored {split.n_scored} instances ({n_unscorable} unscorable): "
        f"P={split.mean_precision:.3f} R={split.mean_recall:.3f} F1={split.macro_f1:.3f}"
    )
    return 0


def _pick_record(records: Sequence[EpisodeRecord], episode_id: str | None) -> EpisodeRecord:
    for record in records:
        if episode_id is not None and record.episode_id != episode_id:
            continue
        if record.final_prompt is not None:
            return record
    raise InputError(
        f"no record with a final prompt{f' for episode {episode_id}' if episode_id else ''}"
    )


def cmd_attribute(args: argparse.Namespace) -> int:
    backends = _backends(args)
    record = _pick_record(read_records(args.records), args.episode_id)
    image = None
    if args.dataset:
        by_id = {e.id: e for e in load_dataset(args.dataset)}
        episode = by_id.get(record.episode_id)
        image = episode.image if episode else None
    sentences = split_sentences(record.final_prompt)
    report = sentence_shap(
        sentences, backends.generator, backends.embedder,
        ratio=args.ratio, seed=args.seed, image=image,
    )
    _emit({"episode_id": record.episode_id, **report.to_dict()}, args.out)
    ranked = sorted(
        zip(report.phi, sentences),
        key=lambda pair: -1.0 if pair[0] is None else pair[0],
        reverse=True,
    )
    for phi, sentence in ranked:
        shown = "   n/a" if phi is None else f"{phi:+.4f}"
        print(f"{shown}  {sentence}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    splits: list[list[InstanceScore]] = []
    unscorable: list[int] = []
    for path in args.scores:
        payload = json.loads(Path(path).read_text())
        splits.append([InstanceScore.from_dict(d) for d in payload["per_instance"]])
        unscorable.append(int(payload["split"].get("n_unscorable", 0)))
    report = aggregate_splits(splits, n_unscorable=unscorable)
    _emit(report.to_dict(), args.out)
    agg = report.aggregate
    print(
        f"{agg.n_splits} splits: "
        f"P={agg.mean_precision:.3f}±{agg.stddev_precision:.3f} "
        f"R={agg.mean_recall:.3f}±{agg.stddev_recall:.3f} "
        f"F1={agg.macro_f1:.3f}±{agg.stddev_f1:.3f}"
    )
    return 0


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


_COMMANDS = {
    "run": cmd_run,
    "baseline": cmd_baseline,
    "ablate-alpha": cmd_ablate_alpha,
    "eval": cmd_eval,
    "attribute": cmd_attribute,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except PunchlineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
