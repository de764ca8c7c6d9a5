"""Generate a synthetic cartoon-explanation dataset for mock runs.

Writes a JSONL dataset plus one tiny placeholder PNG per episode, so the
full pipeline (including image plumbing) can be exercised without any real
data or credentials.
"""

import argparse
import json
import random
from pathlib import Path

from punchline.data import tiny_png_bytes

SUBJECTS = [
    "a heron", "two raccoons", "the office plant", "a retired wizard",
    "an anxious robot", "the night-shift barista", "a committee of owls",
    "a very small dragon",
]
SCENES = [
    "chairs the budget meeting", "files a noise complaint",
    "returns the borrowed ladder", "explains the tax form",
    "audits the cheese drawer", "rehearses the apology",
    "renegotiates bedtime", "unveils the fourth-quarter plan",
]
TWISTS = [
    "nobody brought the minutes", "the ladder was load-bearing",
    "the form is in cursive", "the cheese is a witness",
    "the apology rhymes", "bedtime is now a lifestyle",
    "the plan is a single balloon", "the complaint is about silence",
]


def build_episode(idx: int, rng: random.Random, image_dir: Path) -> dict:
    subject = rng.choice(SUBJECTS)
    scene = rng.choice(SCENES)
    twist = rng.choice(TWISTS)
    image_name = f"panel_{idx:03d}.png"
    (image_dir / image_name).write_bytes(tiny_png_bytes())
    return {
        "id": f"syn{idx:03d}",
        "image_path": f"images/{image_name}",
        "caption": f"{subject} {scene}.",
        "dataset": "newyorker",
        "references": [
            f"The humor is that {subject} {scene} but {twist}.",
            f"It is funny because {twist} undercuts the formality of the scene.",
        ],
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("synthetic/dataset.jsonl"))
    parser.add_argument("--n", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    image_dir = args.out.parent / "images"
    image_dir.mkdir(parents=True, exist_ok=True)

    with args.out.open("w", encoding="utf-8") as handle:
        for idx in range(args.n):
            episode = build_episode(idx, rng, image_dir)
            handle.write(json.dumps(episode, ensure_ascii=False) + "\n")
    print(f"wrote {args.n} episodes to {args.out}")


if __name__ == "__main__":
    main()
