"""Sentence-level Shapley-style attribution of a response to its prompt.

Each prompt sentence gets a score phi = mean cosine(base response, subset
response) over sampled prompt subsets containing the sentence, minus the mean
over subsets excluding it. Subsets are proper and non-empty; the n
leave-one-out subsets are always present, with additional subsets sampled at
the requested ratio. ratio = 1 with at most `exact_threshold` sentences
enumerates every proper non-empty subset, which is the exact mode the tests
treat as ground truth.
"""

from __future__ import annotations

import itertools
import logging
import random
import re
from typing import Sequence

import numpy as np

from .backends import Embedder, Generator, GenerationRequest
from .errors import BackendError, GenerationError, InputError
from .types import AttributionReport

log = logging.getLogger(__name__)

EXACT_THRESHOLD = 10
MAX_EXTRA_SUBSETS = 512

# Enumerating "everything but the sampled" is cheap up to here; beyond it the
# sampler draws random index masks instead.
_ENUMERATE_LIMIT = 16

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    """Split on terminal punctuation followed by whitespace; newlines always
    break. Abbreviations like "e.g." therefore split too, by design."""
    sentences: list[str] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        sentences.extend(p.strip() for p in _SENTENCE_END.split(line) if p.strip())
    return sentences


def sample_ablations(
    n: int,
    ratio: float,
    seed: int,
    exact_threshold: int = EXACT_THRESHOLD,
    max_extra: int = MAX_EXTRA_SUBSETS,
) -> list[tuple[int, ...]]:
    """Subsets of range(n) to ablate against: every leave-one-out subset, plus
    ratio * (2^n - n - 2) of the other proper non-empty subsets, sampled
    without replacement. ratio = 1 with n <= exact_threshold returns the full
    enumeration. The sampled count is capped at max_extra with a warning."""
    if n < 1:
        raise InputError("need at least one sentence")
    if not 0.0 < ratio <= 1.0:
        raise InputError(f"ratio {ratio} outside (0, 1]")
    if ratio == 1.0 and n <= exact_threshold:
        return [
            s
            for size in range(n - 1, 0, -1)
            for s in itertools.combinations(range(n), size)
        ]
    loo = [tuple(j for j in range(n) if j != i) for i in range(n) if n > 1]
    quota = int(round(ratio * (2**n - n - 2)))
    if quota > max_extra:
        log.warning(
            "capping extra ablation subsets at %d (requested %d)", max_extra, quota
        )
        quota = max_extra
    if quota <= 0:
        return loo
    rng = random.Random(seed)
    taken = set(loo)
    if n <= _ENUMERATE_LIMIT:
        remaining = [
            s
            for size in range(1, n)
            for s in itertools.combinations(range(n), size)
            if s not in taken
        ]
        extras = rng.sample(remaining, min(quota, len(remaining)))
    else:
        extras = []
        full_mask = (1 << n) - 1
        while len(extras) < quota:
            mask = rng.getrandbits(n)
            if mask == 0 or mask == full_mask:
                continue
            subset = tuple(i for i in range(n) if mask >> i & 1)
            if subset in taken:
                continue
            taken.add(subset)
            extras.append(subset)
    return loo + extras


def sentence_shap(
    sentences: Sequence[str],
    generator: Generator,
    embedder: Embedder,
    ratio: float = 1.0,
    seed: int = 0,
    temperature: float = 0.0,
    max_output_tokens: int = 512,
    image: str | bytes | None = None,
) -> AttributionReport:
    """Attribute the full-prompt response to individual prompt sentences.

    Subsets render as the included sentences joined in original order. A
    subset whose generation fails is dropped from both means; a sentence left
    with an empty containing or excluding side gets phi = None.
    """
    sentences = list(sentences)
    if len(sentences) < 2:
        raise InputError("attribution needs at least two sentences")

    def respond(prompt: str) -> str:
        return generator.generate(
            GenerationRequest(
                prompt=prompt,
                image=image,
                temperature=temperature,
                max_output_tokens=max_output_tokens,
                seed=seed,
            )
        )

    base_response = respond(" ".join(sentences))
    subsets = sample_ablations(len(sentences), ratio=ratio, seed=seed)
    kept: list[tuple[tuple[int, ...], str]] = []
    for subset in subsets:
        prompt = " ".join(sentences[i] for i in subset)
        try:
            kept.append((subset, respond(prompt)))
        except (BackendError, GenerationError) as exc:
            log.warning("subset %s generation failed: %s", subset, exc)
    embs = embedder.embed([base_response] + [resp for _, resp in kept])
    base_vec = np.asarray(embs[0], dtype=float)
    cosines = [float(np.dot(base_vec, np.asarray(e, dtype=float))) for e in embs[1:]]

    phi: list[float | None] = []
    for i in range(len(sentences)):
        inside = [c for (subset, _), c in zip(kept, cosines) if i in subset]
        outside = [c for (subset, _), c in zip(kept, cosines) if i not in subset]
        if not inside or not outside:
            phi.append(None)
        else:
            phi.append(sum(inside) / len(inside) - sum(outside) / len(outside))
    return AttributionReport(
        sentences=tuple(sentences),
        base_response=base_response,
        phi=tuple(phi),
        samples_used=len(kept),
        ratio=ratio,
    )
