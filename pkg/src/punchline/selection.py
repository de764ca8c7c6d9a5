"""Information-bottleneck style selection of implications and candidates.

The two proxies:

* compression of an implication = max cosine similarity between its embedding
  and the embeddings of the existing textual inputs (caption, descriptions,
  previously selected implications). High means redundant.
* relevance of an implication = min over candidate explanations of
  CE(candidate | scoring context with the implication) + length penalty,
  where LP_i = beta * |L_i - mean(L)| and beta = mean(CE) / mean(L), both
  means taken over the same freshly scored candidate set.

An implication's combined score is compression + alpha * relevance and the k
smallest win; candidate pruning keeps the min(k, 3) smallest cross-entropies.
Ties break toward lower compression, then input order. All embeddings are
unit vectors by the embedder contract, so cosine is a plain dot product.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .backends import Embedder, Scorer
from .errors import BackendError, InputError, ScoringError
from .types import MAX_CANDIDATES, CandidateExplanation, Description, Implication

log = logging.getLogger(__name__)

_UNIT_TOL = 1e-6


def _text_of(item) -> str:
    if isinstance(item, (Description, Implication, CandidateExplanation)):
        return item.text
    return str(item)


def _check_unit(vec: np.ndarray, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValueError(f"{what} embedding norm {norm} is not unit")
    return vec


def _block(lines: Sequence[str]) -> list[str]:
    return list(lines) if lines else ["None."]


@dataclass(frozen=True, eq=False)
class SelectionContext:
    """Embedded inputs a hop selects against, plus the texts needed to render
    per-implication scoring contexts."""

    caption: str
    description_texts: tuple[str, ...]
    prior_implication_texts: tuple[str, ...]
    caption_emb: np.ndarray
    description_embs: tuple[np.ndarray, ...]
    prior_implication_embs: tuple[np.ndarray, ...]
    candidates: tuple[CandidateExplanation, ...]

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("selection context needs at least one candidate")

    @classmethod
    def build(
        cls,
        caption: str,
        descriptions: Sequence[Description | str],
        prior_implications: Sequence[Implication | str],
        candidates: Sequence[CandidateExplanation],
        embedder: Embedder,
    ) -> "SelectionContext":
        desc_texts = tuple(_text_of(d) for d in descriptions)
        prior_texts = tuple(_text_of(p) for p in prior_implications)
        vecs = embedder.embed([caption, *desc_texts, *prior_texts])
        vecs = [_check_unit(v, "context") for v in vecs]
        n_desc = len(desc_texts)
        return cls(
            caption=caption,
            description_texts=desc_texts,
            prior_implication_texts=prior_texts,
            caption_emb=vecs[0],
            description_embs=tuple(vecs[1 : 1 + n_desc]),
            prior_implication_embs=tuple(vecs[1 + n_desc :]),
            candidates=tuple(candidates),
        )

    @property
    def context_embeddings(self) -> list[np.ndarray]:
        return [self.caption_emb, *self.description_embs, *self.prior_implication_embs]

    def scoring_context(self, implication_text: str) -> str:
        """Text the scorer conditions on: caption, then descriptions, then
        prior implications, then the target implication (in that order)."""
        lines = [f"[Caption]: {self.caption}", "[Descriptions]:"]
        lines += _block(self.description_texts)
        lines.append("[Implications]:")
        lines += _block(self.prior_implication_texts)
        lines.append("[Target Implication]:")
        lines.append(implication_text)
        return "\n".join(lines)


def candidate_scoring_context(
    caption: str,
    descriptions: Sequence[Description | str],
    implications: Sequence[Implication | str],
    prior_candidates: Sequence[CandidateExplanation],
) -> str:
    """Shared context for pruning a hop's fresh candidates: caption,
    descriptions, the hop's newly selected implications, and the previous
    hop's retained candidates."""
    lines = [f"[Caption]: {caption}", "[Descriptions]:"]
    lines += _block([_text_of(d) for d in descriptions])
    lines.append("[Implications]:")
    lines += _block([_text_of(i) for i in implications])
    lines.append("[Candidate Answers]:")
    lines += _block([c.text for c in prior_candidates])
    return "\n".join(lines)


def compression_term(
    implication_emb: np.ndarray | Sequence[float],
    context_embs: Sequence[np.ndarray],
) -> float:
    if len(context_embs) == 0:
        raise InputError("compression term needs at least one context embedding")
    vec = np.asarray(implication_emb, dtype=float)
    return max(float(np.dot(vec, np.asarray(ctx, dtype=float))) for ctx in context_embs)


def length_penalties_from(ces: Sequence[float], lengths: Sequence[int]) -> list[float]:
    if not ces or len(ces) != len(lengths):
        raise InputError("need matching non-empty CE and length sequences")
    mean_ce = sum(ces) / len(ces)
    mean_len = sum(lengths) / len(lengths)
    beta = mean_ce / mean_len
    return [beta * abs(length - mean_len) for length in lengths]


def length_penalties(candidates: Sequence[CandidateExplanation]) -> list[float]:
    """LP over candidates whose cross-entropies are already recorded."""
    if not candidates:
        raise InputError("no candidates")
    if any(c.cross_entropy is None for c in candidates):
        raise InputError("every candidate needs cross_entropy set")
    return length_penalties_from(
        [c.cross_entropy for c in candidates], [c.token_length for c in candidates]
    )


def relevance_term(
    implication: Implication,
    context_for_scoring: str,
    candidates: Sequence[CandidateExplanation],
    scorer: Scorer,
) -> float:
    """min over candidates of CE + LP against the implication's context.

    Candidates whose scoring call fails drop out of both the min and the LP
    population; if nothing survives the term is +inf, which keeps the
    implication out of every selection.
    """
    ces: list[float] = []
    lengths: list[int] = []
    for cand in candidates:
        try:
            ce = float(scorer.score_cross_entropy(context_for_scoring, cand.text))
        except BackendError as exc:
            log.warning("scoring failed for candidate %r: %s", cand.text[:40], exc)
            continue
        ces.append(ce)
        lengths.append(cand.token_length)
    if not ces:
        return math.inf
    lps = length_penalties_from(ces, lengths)
    return min(ce + lp for ce, lp in zip(ces, lps))


def select_implications(
    pool: Sequence[Implication],
    sel_ctx: SelectionContext,
    k: int,
    alpha: float,
    embedder: Embedder,
    scorer: Scorer,
) -> list[Implication]:
    """Pick the <=k implications minimizing compression + alpha * relevance.

    Ties break toward lower compression, then pool order. Implications whose
    relevance scoring failed entirely are never selected, even when the pool
    is smaller than k. Returned implications carry their embeddings and all
    three scores, in selection-rank order.
    """
    if not pool:
        return []
    vecs = embedder.embed([imp.text for imp in pool])
    context_embs = sel_ctx.context_embeddings
    ranked: list[tuple[float, float, float, int]] = []
    for idx, (imp, vec) in enumerate(zip(pool, vecs)):
        comp = compression_term(vec, context_embs)
        rel = relevance_term(
            imp, sel_ctx.scoring_context(imp.text), sel_ctx.candidates, scorer
        )
        combined = comp + alpha * rel
        if not math.isfinite(combined):
            continue
        ranked.append((combined, comp, rel, idx))
    ranked.sort(key=lambda row: (row[0], row[1], row[3]))
    out = []
    for combined, comp, rel, idx in ranked[: min(k, len(ranked))]:
        out.append(
            replace(
                pool[idx],
                embedding=tuple(float(x) for x in vecs[idx]),
                compression_score=comp,
                relevance_score=rel,
                combined_score=combined,
            )
        )
    return out


def select_candidates(
    candidates: Sequence[CandidateExplanation],
    rendered_context: str,
    k: int,
    scorer: Scorer,
) -> list[CandidateExplanation]:
    """Keep the min(k, 3) candidates with the smallest cross-entropy given the
    rendered context; stable ties. Raises ScoringError when nothing scores."""
    if not candidates:
        raise InputError("no candidates to select from")
    scored: list[tuple[float, int]] = []
    for idx, cand in enumerate(candidates):
        try:
            ce = float(scorer.score_cross_entropy(rendered_context, cand.text))
        except BackendError as exc:
            log.warning("candidate scoring failed for %r: %s", cand.text[:40], exc)
            continue
        scored.append((ce, idx))
    if not scored:
        raise ScoringError("every candidate scoring call failed")
    scored.sort(key=lambda row: (row[0], row[1]))
    kept = scored[: min(k, MAX_CANDIDATES, len(scored))]
    lps = length_penalties_from(
        [ce for ce, _ in kept], [candidates[i].token_length for _, i in kept]
    )
    return [
        replace(candidates[i], cross_entropy=ce, length_penalty=lp)
        for (ce, i), lp in zip(kept, lps)
    ]


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.RandomState) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.randint(n))]
    best_sim = X @ X[chosen[0]]
    for _ in range(1, k):
        # Squared Euclidean distance on unit vectors is 2 - 2*cos.
        d2 = np.maximum(0.0, 2.0 - 2.0 * best_sim)
        total = float(d2.sum())
        if total <= 1e-12:
            taken = set(chosen)
            remaining = [i for i in range(n) if i not in taken]
            nxt = remaining[0] if remaining else chosen[0]
        else:
            r = rng.random_sample() * total
            nxt = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            nxt = min(nxt, n - 1)
        chosen.append(nxt)
        best_sim = np.maximum(best_sim, X @ X[nxt])
    return X[np.asarray(chosen)].copy()


def _spherical_kmeans(
    X: np.ndarray, k: int, rng_seed: int, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """K-means with cosine assignment on unit vectors: centroids renormalized
    each update, empty clusters reseeded to the worst-fit point."""
    rng = np.random.RandomState(rng_seed)
    centroids = _kmeans_pp_init(X, k, rng)
    labels = np.argmax(X @ centroids.T, axis=1)
    for _ in range(max_iter):
        new_centroids = np.empty_like(centroids)
        for c in range(k):
            members = X[labels == c]
            if members.shape[0] == 0:
                fit = np.einsum("ij,ij->i", X, centroids[labels])
                new_centroids[c] = X[int(np.argmin(fit))]
                continue
            m = members.mean(axis=0)
            norm = float(np.linalg.norm(m))
            if norm < 1e-12:
                new_centroids[c] = members[0]
            else:
                new_centroids[c] = m / norm
        new_labels = np.argmax(X @ new_centroids.T, axis=1)
        centroids = new_centroids
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centroids


def cap_pool(
    implications: Sequence[Implication],
    embedder: Embedder,
    max_pool: int,
    rng_seed: int,
) -> list[Implication]:
    """Cap an oversized pool by clustering embeddings into max_pool groups and
    keeping the member nearest each centroid (by cosine, ties to the earliest).
    Pools at or under the cap pass through untouched, which also makes the
    operation idempotent. Output preserves input order."""
    imps = list(implications)
    if len(imps) <= max_pool:
        return imps
    vecs = np.vstack(embedder.embed([imp.text for imp in imps]))
    labels, centroids = _spherical_kmeans(vecs, max_pool, rng_seed)
    chosen: list[int] = []
    for c in range(max_pool):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            continue
        sims = vecs[members] @ centroids[c]
        chosen.append(int(members[int(np.argmax(sims))]))
    chosen.sort()
    return [imps[i] for i in chosen]
