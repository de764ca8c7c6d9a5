import json
from pathlib import Path

import numpy as np
import pytest

from punchline.backends import GenerationRequest
from punchline.data import tiny_png_bytes
from punchline.errors import BackendError
from punchline.types import CandidateExplanation, Implication, count_tokens


class FixtureEmbedder:
    """Embedder backed by an explicit text -> vector table."""

    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.calls = 0

    def embed(self, texts):
        self.calls += 1
        return [self.table[t] for t in texts]


class FixtureScorer:
    """Scorer backed by an explicit (context, target) -> CE table."""

    def __init__(self, table):
        self.table = dict(table)
        self.calls = 0

    def score_cross_entropy(self, context, target):
        self.calls += 1
        return float(self.table[(context, target)])


class FailingScorer:
    """Scorer that always fails, optionally only for selected targets."""

    def __init__(self, fail_targets=None):
        self.fail_targets = fail_targets
        self.calls = 0

    def score_cross_entropy(self, context, target):
        self.calls += 1
        if self.fail_targets is None or target in self.fail_targets:
            raise BackendError("scorer down")
        return 1.0


class ScriptedGenerator:
    """Generator answering from a prompt -> text table, with an optional
    fallback function for prompts not in the table."""

    def __init__(self, table=None, fallback=None):
        self.table = dict(table or {})
        self.fallback = fallback
        self.calls = 0
        self.prompts = []
        self.requests = []

    def generate(self, request: GenerationRequest) -> str:
        self.calls += 1
        self.prompts.append(request.prompt)
        self.requests.append(request)
        if request.prompt in self.table:
            return self.table[request.prompt]
        if self.fallback is not None:
            return self.fallback(request)
        raise KeyError(f"no scripted response for prompt: {request.prompt[:80]!r}")


def make_implication(text, hop_born=1, **kw):
    return Implication(text=text, hop_born=hop_born, **kw)


def make_candidate(text, hop_born=0, token_length=None, **kw):
    if token_length is None:
        token_length = max(1, count_tokens(text))
    return CandidateExplanation(text=text, hop_born=hop_born, token_length=token_length, **kw)


def write_dataset(tmp_path: Path, n: int, dataset: str = "newyorker", refs=None):
    """Write a tiny synthetic dataset (JSONL + 1x1 png images); returns the path."""
    img_dir = tmp_path / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    path = tmp_path / "dataset.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n):
            img = img_dir / f"ep{i:04d}.png"
            img.write_bytes(tiny_png_bytes())
            row = {
                "id": f"ep{i:04d}",
                "image_path": str(img),
                "caption": f"A caption about item number {i}.",
                "dataset": dataset,
                "references": refs
                if refs is not None
                else [f"The joke contrasts item {i} with expectations."],
            }
            fh.write(json.dumps(row) + "\n")
    return path


@pytest.fixture
def dataset_path(tmp_path):
    return write_dataset(tmp_path, 5)
