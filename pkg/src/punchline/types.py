"""Core domain types for the humor-explanation pipeline.

Everything here is an immutable value object with lossless dict round trips,
so hop-by-hop state can be persisted to JSONL and reloaded exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Literal, Mapping, Sequence

DatasetName = Literal["memecap", "newyorker", "yesbut"]
DATASET_NAMES: tuple[str, ...] = ("memecap", "newyorker", "yesbut")

Mode = Literal["pipeline", "zs", "cot", "sr", "sr_noc"]
MODES: tuple[str, ...] = ("pipeline", "zs", "cot", "sr", "sr_noc")

MAX_CANDIDATES = 3
EMBEDDING_NORM_TOL = 1e-6


def count_tokens(text: str) -> int:
    """Default token length: whitespace-delimited tokens. Pluggable elsewhere."""
    return len(text.split())


def _as_float_tuple(values: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def _opt_float(value: Any) -> float | None:
    return None if value is None else float(value)


@dataclass(frozen=True)
class Episode:
    """One dataset instance: an image, its caption, and reference explanations."""

    id: str
    image: str | bytes
    caption: str
    dataset: str
    references: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("episode id must be non-empty")
        if not self.caption.strip():
            raise ValueError(f"episode {self.id}: caption must be non-empty")
        if self.dataset not in DATASET_NAMES:
            raise ValueError(f"episode {self.id}: unknown dataset {self.dataset!r}")
        object.__setattr__(self, "references", tuple(self.references))


@dataclass(frozen=True)
class Description:
    """A literal statement about image content, free of interpretation."""

    text: str
    sentence_count: int = 1

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("description text must be non-empty")
        if not 1 <= self.sentence_count <= 5:
            raise ValueError(f"sentence_count {self.sentence_count} outside 1..5")

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "sentence_count": self.sentence_count}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Description":
        return cls(text=d["text"], sentence_count=int(d["sentence_count"]))


@dataclass(frozen=True)
class Implication:
    """A non-literal inference (world knowledge, intent) drawn from the inputs.

    Scores are attached by the selection step: `compression_score` is the
    max-cosine redundancy proxy, `relevance_score` the CE-based relevance
    proxy, and `combined_score = compression + alpha * relevance`. A failed
    scoring pass leaves `relevance_score` at +inf, which keeps the implication
    out of every selection.
    """

    text: str
    hop_born: int = 1
    embedding: tuple[float, ...] | None = None
    compression_score: float | None = None
    relevance_score: float | None = None
    combined_score: float | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("implication text must be non-empty")
        if self.hop_born < 1:
            raise ValueError(f"hop_born {self.hop_born} must be >= 1")
        if self.embedding is not None:
            emb = _as_float_tuple(self.embedding)
            object.__setattr__(self, "embedding", emb)
            norm = math.sqrt(sum(v * v for v in emb))
            if abs(norm - 1.0) > EMBEDDING_NORM_TOL:
                raise ValueError(f"embedding norm {norm} not within 1e-6 of 1.0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "hop_born": self.hop_born,
            "embedding": None if self.embedding is None else list(self.embedding),
            "compression_score": self.compression_score,
            "relevance_score": self.relevance_score,
            "combined_score": self.combined_score,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Implication":
        emb = d.get("embedding")
        return cls(
            text=d["text"],
            hop_born=int(d["hop_born"]),
            embedding=None if emb is None else _as_float_tuple(emb),
            compression_score=_opt_float(d.get("compression_score")),
            relevance_score=_opt_float(d.get("relevance_score")),
            combined_score=_opt_float(d.get("combined_score")),
        )


@dataclass(frozen=True)
class CandidateExplanation:
    """A draft explanation, carrying its scoring byproducts when available."""

    text: str
    hop_born: int = 0
    token_length: int = 1
    cross_entropy: float | None = None
    length_penalty: float | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("candidate text must be non-empty")
        if self.hop_born < 0:
            raise ValueError(f"hop_born {self.hop_born} must be >= 0")
        if self.token_length < 1:
            raise ValueError(f"token_length {self.token_length} must be >= 1")
        if self.cross_entropy is not None and self.cross_entropy < 0:
            raise ValueError("cross_entropy must be non-negative")
        if self.length_penalty is not None and self.length_penalty < 0:
            raise ValueError("length_penalty must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "hop_born": self.hop_born,
            "token_length": self.token_length,
            "cross_entropy": self.cross_entropy,
            "length_penalty": self.length_penalty,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CandidateExplanation":
        return cls(
            text=d["text"],
            hop_born=int(d["hop_born"]),
            token_length=int(d["token_length"]),
            cross_entropy=_opt_float(d.get("cross_entropy")),
            length_penalty=_opt_float(d.get("length_penalty")),
        )


@dataclass(frozen=True)
class HopState:
    """Everything the pipeline knew at the end of one hop.

    `implication_pool` is the pool selection ran over at this hop,
    `selected_implications` the <=k new picks out of it, `candidates` the
    retained (pruned) explanations. Hop 0 has an empty pool and holds the
    initial candidate.
    """

    hop: int
    descriptions: tuple[Description, ...] = ()
    implication_pool: tuple[Implication, ...] = ()
    selected_implications: tuple[Implication, ...] = ()
    candidates: tuple[CandidateExplanation, ...] = ()

    def __post_init__(self) -> None:
        if self.hop < 0:
            raise ValueError(f"hop {self.hop} must be >= 0")
        object.__setattr__(self, "descriptions", tuple(self.descriptions))
        object.__setattr__(self, "implication_pool", tuple(self.implication_pool))
        object.__setattr__(self, "selected_implications", tuple(self.selected_implications))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if len(self.candidates) > MAX_CANDIDATES:
            raise ValueError(f"{len(self.candidates)} candidates exceed the cap of {MAX_CANDIDATES}")
        pool_texts = {imp.text for imp in self.implication_pool}
        for imp in self.selected_implications:
            if imp.text not in pool_texts:
                raise ValueError(f"selected implication not drawn from this hop's pool: {imp.text!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "hop": self.hop,
            "descriptions": [d.to_dict() for d in self.descriptions],
            "implication_pool": [i.to_dict() for i in self.implication_pool],
            "selected_implications": [i.to_dict() for i in self.selected_implications],
            "candidates": [c.to_dict() for c in self.candidates],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "HopState":
        return cls(
            hop=int(d["hop"]),
            descriptions=tuple(Description.from_dict(x) for x in d["descriptions"]),
            implication_pool=tuple(Implication.from_dict(x) for x in d["implication_pool"]),
            selected_implications=tuple(Implication.from_dict(x) for x in d["selected_implications"]),
            candidates=tuple(CandidateExplanation.from_dict(x) for x in d["candidates"]),
        )


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters for one run. Defaults are the recommended operating point."""

    alpha: float = 0.7
    hops: int = 2
    k: int = 3
    max_pool: int = 15
    gen_temperature: float = 0.8
    eval_temperature: float = 0.2
    description_window: int = 2
    rng_seed: int = 0
    max_output_tokens: int = 512
    multi_ref: str = "max"

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.hops < 0:
            raise ValueError("hops must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_pool < self.k:
            raise ValueError("max_pool must be >= k")
        if self.gen_temperature < 0 or self.eval_temperature < 0:
            raise ValueError("temperatures must be >= 0")
        if self.description_window < 1:
            raise ValueError("description_window must be >= 1")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.multi_ref not in ("max", "mean"):
            raise ValueError(f"multi_ref must be 'max' or 'mean', got {self.multi_ref!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "hops": self.hops,
            "k": self.k,
            "max_pool": self.max_pool,
            "gen_temperature": self.gen_temperature,
            "eval_temperature": self.eval_temperature,
            "description_window": self.description_window,
            "rng_seed": self.rng_seed,
            "max_output_tokens": self.max_output_tokens,
            "multi_ref": self.multi_ref,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PipelineConfig":
        return cls(
            alpha=float(d["alpha"]),
            hops=int(d["hops"]),
            k=int(d["k"]),
            max_pool=int(d["max_pool"]),
            gen_temperature=float(d["gen_temperature"]),
            eval_temperature=float(d["eval_temperature"]),
            description_window=int(d["description_window"]),
            rng_seed=int(d["rng_seed"]),
            max_output_tokens=int(d.get("max_output_tokens", 512)),
            multi_ref=str(d.get("multi_ref", "max")),
        )


@dataclass(frozen=True)
class InstanceScore:
    """Per-instance evaluation outcome with atom-level verdicts."""

    id: str
    precision: float
    recall: float
    f1: float
    atom_verdicts: tuple[tuple[str, bool], ...] = ()

    def __post_init__(self) -> None:
        for name in ("precision", "recall", "f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")
        object.__setattr__(
            self, "atom_verdicts", tuple((str(t), bool(v)) for t, v in self.atom_verdicts)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "atom_verdicts": [[t, v] for t, v in self.atom_verdicts],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "InstanceScore":
        return cls(
            id=d["id"],
            precision=float(d["precision"]),
            recall=float(d["recall"]),
            f1=float(d["f1"]),
            atom_verdicts=tuple((t, bool(v)) for t, v in d.get("atom_verdicts", ())),
        )


@dataclass(frozen=True)
class SplitAggregate:
    """Aggregate metrics for one seed split."""

    mean_precision: float
    mean_recall: float
    macro_f1: float
    f1_of_means: float
    n_scored: int
    n_unscorable: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
            "macro_f1": self.macro_f1,
            "f1_of_means": self.f1_of_means,
            "n_scored": self.n_scored,
            "n_unscorable": self.n_unscorable,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SplitAggregate":
        return cls(
            mean_precision=float(d["mean_precision"]),
            mean_recall=float(d["mean_recall"]),
            macro_f1=float(d["macro_f1"]),
            f1_of_means=float(d["f1_of_means"]),
            n_scored=int(d["n_scored"]),
            n_unscorable=int(d.get("n_unscorable", 0)),
        )


@dataclass(frozen=True)
class AggregateStats:
    """Cross-split means with sample standard deviations (n-1)."""

    mean_precision: float
    mean_recall: float
    macro_f1: float
    f1_of_means: float
    stddev_precision: float
    stddev_recall: float
    stddev_f1: float
    n_splits: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
            "macro_f1": self.macro_f1,
            "f1_of_means": self.f1_of_means,
            "stddev_precision": self.stddev_precision,
            "stddev_recall": self.stddev_recall,
            "stddev_f1": self.stddev_f1,
            "n_splits": self.n_splits,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AggregateStats":
        return cls(
            mean_precision=float(d["mean_precision"]),
            mean_recall=float(d["mean_recall"]),
            macro_f1=float(d["macro_f1"]),
            f1_of_means=float(d["f1_of_means"]),
            stddev_precision=float(d["stddev_precision"]),
            stddev_recall=float(d["stddev_recall"]),
            stddev_f1=float(d["stddev_f1"]),
            n_splits=int(d["n_splits"]),
        )


@dataclass(frozen=True)
class EvalReport:
    """Full evaluation output: per-instance rows, per-split and overall stats."""

    per_instance: tuple[InstanceScore, ...]
    splits: tuple[SplitAggregate, ...]
    aggregate: AggregateStats

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_instance", tuple(self.per_instance))
        object.__setattr__(self, "splits", tuple(self.splits))

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_instance": [s.to_dict() for s in self.per_instance],
            "splits": [s.to_dict() for s in self.splits],
            "aggregate": self.aggregate.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalReport":
        return cls(
            per_instance=tuple(InstanceScore.from_dict(x) for x in d["per_instance"]),
            splits=tuple(SplitAggregate.from_dict(x) for x in d["splits"]),
            aggregate=AggregateStats.from_dict(d["aggregate"]),
        )


@dataclass(frozen=True)
class AttributionReport:
    """Sentence-level attribution of a response to its prompt sentences.

    `phi[i]` is None when sentence i had no usable containing or excluding
    subset (possible only after generation failures).
    """

    sentences: tuple[str, ...]
    base_response: str
    phi: tuple[float | None, ...]
    samples_used: int
    ratio: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(
            self, "phi", tuple(None if p is None else float(p) for p in self.phi)
        )
        if len(self.phi) != len(self.sentences):
            raise ValueError("phi length must match sentence count")
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio {self.ratio} outside (0, 1]")
        if self.samples_used < 0:
            raise ValueError("samples_used must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sentences": list(self.sentences),
            "base_response": self.base_response,
            "phi": list(self.phi),
            "samples_used": self.samples_used,
            "ratio": self.ratio,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AttributionReport":
        return cls(
            sentences=tuple(d["sentences"]),
            base_response=d["base_response"],
            phi=tuple(d["phi"]),
            samples_used=int(d["samples_used"]),
            ratio=float(d["ratio"]),
        )


__all__ = [
    "AggregateStats",
    "AttributionReport",
    "CandidateExplanation",
    "DATASET_NAMES",
    "DatasetName",
    "Description",
    "Episode",
    "EvalReport",
    "HopState",
    "Implication",
    "InstanceScore",
    "MAX_CANDIDATES",
    "MODES",
    "Mode",
    "PipelineConfig",
    "SplitAggregate",
    "count_tokens",
    "replace",
]
