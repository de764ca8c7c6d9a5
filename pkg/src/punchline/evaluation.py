"""LLM-judge evaluation: atomic-fact precision/recall/F1 with
description-augmented references, plus split and cross-split aggregation.

Recall decomposes each reference into atomic facts and asks the judge whether
each is conveyed in the prediction; with several references the per-reference
recalls combine per `cfg.multi_ref` (max by default). Precision decomposes
the prediction and asks whether each atom is inferable from the references
augmented with the union of description-derived atoms.
"""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass
from typing import Sequence

from .backends import Generator, GenerationRequest
from .errors import InputError, UnscorableError
from .prompting import TemplateSet, parse_numbered_list
from .types import (
    AggregateStats,
    EvalReport,
    InstanceScore,
    PipelineConfig,
    SplitAggregate,
)

log = logging.getLogger(__name__)

ATOM_SOURCES = ("reference", "prediction", "description")

_VERIFY_TEMPLATES = {"recall": "verify_recall", "precision": "verify_precision"}


@dataclass(frozen=True)
class AtomicFact:
    """One self-contained claim extracted by the judge."""

    text: str
    source: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("atomic fact text must be non-empty")
        if self.source not in ATOM_SOURCES:
            raise ValueError(f"unknown atom source {self.source!r}")


def _judge_call(judge: Generator, prompt: str, cfg: PipelineConfig) -> str:
    return judge.generate(
        GenerationRequest(
            prompt=prompt,
            temperature=cfg.eval_temperature,
            max_output_tokens=cfg.max_output_tokens,
            seed=cfg.rng_seed,
        )
    )


def decompose_atoms(
    text: str,
    judge: Generator,
    templates: TemplateSet,
    source: str,
    cfg: PipelineConfig,
) -> list[AtomicFact]:
    """Numbered-list decomposition; an empty judge output yields an empty
    list, which callers treat as unscorable where it matters."""
    prompt = templates.render("decompose", text=text)
    out = _judge_call(judge, prompt, cfg)
    return [AtomicFact(text=t, source=source) for t in parse_numbered_list(out)]


def verify_atom(
    atom_text: str,
    against_text: str,
    direction: str,
    judge: Generator,
    templates: TemplateSet,
    cfg: PipelineConfig,
) -> bool:
    """True iff the judge's first token normalizes to "yes". Anything that is
    neither yes nor no counts as no, with a warning."""
    try:
        template_name = _VERIFY_TEMPLATES[direction]
    except KeyError:
        raise InputError(f"unknown verify direction {direction!r}") from None
    prompt = templates.render(template_name, sentence1=atom_text, sentence2=against_text)
    out = _judge_call(judge, prompt, cfg)
    tokens = out.strip().split()
    norm = tokens[0].strip(".,:;!?'\"`").lower() if tokens else ""
    if norm == "yes":
        return True
    if norm != "no":
        log.warning("judge verdict %r not yes/no, counted as No", out[:40])
    return False


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def score_instance(
    instance_id: str,
    prediction: str,
    references: Sequence[str],
    descriptions: Sequence[str],
    judge: Generator,
    templates: TemplateSet,
    cfg: PipelineConfig,
) -> InstanceScore:
    """Score one prediction. Raises UnscorableError when no reference yields
    atoms or the prediction itself decomposes to nothing."""
    if not references:
        raise InputError(f"{instance_id}: at least one reference required")
    verdicts: list[tuple[str, bool]] = []

    per_reference: list[float] = []
    for reference in references:
        atoms = decompose_atoms(reference, judge, templates, "reference", cfg)
        if not atoms:
            log.warning("%s: reference decomposed to zero atoms, skipped", instance_id)
            continue
        hits = 0
        for atom in atoms:
            ok = verify_atom(atom.text, prediction, "recall", judge, templates, cfg)
            verdicts.append((f"recall: {atom.text}", ok))
            hits += ok
        per_reference.append(hits / len(atoms))
    if not per_reference:
        raise UnscorableError(f"{instance_id}: every reference decomposed to zero atoms")
    if cfg.multi_ref == "max":
        recall = max(per_reference)
    else:
        recall = sum(per_reference) / len(per_reference)

    prediction_atoms = decompose_atoms(prediction, judge, templates, "prediction", cfg)
    if not prediction_atoms:
        raise UnscorableError(f"{instance_id}: prediction decomposed to zero atoms")
    seen: set[str] = set()
    description_atoms: list[str] = []
    for description in descriptions:
        for atom in decompose_atoms(description, judge, templates, "description", cfg):
            if atom.text not in seen:
                seen.add(atom.text)
                description_atoms.append(atom.text)
    against = "\n".join([*references, *description_atoms])
    hits = 0
    for atom in prediction_atoms:
        ok = verify_atom(atom.text, against, "precision", judge, templates, cfg)
        verdicts.append((f"precision: {atom.text}", ok))
        hits += ok
    precision = hits / len(prediction_atoms)

    return InstanceScore(
        id=instance_id,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        atom_verdicts=tuple(verdicts),
    )


def split_aggregate(
    scores: Sequence[InstanceScore], n_unscorable: int = 0
) -> SplitAggregate:
    if not scores:
        raise InputError("cannot aggregate an empty split")
    mean_p = statistics.fmean(s.precision for s in scores)
    mean_r = statistics.fmean(s.recall for s in scores)
    return SplitAggregate(
        mean_precision=mean_p,
        mean_recall=mean_r,
        macro_f1=statistics.fmean(s.f1 for s in scores),
        f1_of_means=f1_score(mean_p, mean_r),
        n_scored=len(scores),
        n_unscorable=n_unscorable,
    )


def aggregate_splits(
    splits: Sequence[Sequence[InstanceScore]],
    n_unscorable: Sequence[int] | None = None,
) -> EvalReport:
    """Per-split aggregates plus cross-split means and sample standard
    deviations (0.0 for a single split)."""
    if not splits:
        raise InputError("need at least one split")
    if n_unscorable is None:
        n_unscorable = [0] * len(splits)
    aggs = [split_aggregate(s, u) for s, u in zip(splits, n_unscorable)]

    def spread(values: list[float]) -> float:
        return statistics.stdev(values) if len(values) > 1 else 0.0

    precisions = [a.mean_precision for a in aggs]
    recalls = [a.mean_recall for a in aggs]
    macro_f1s = [a.macro_f1 for a in aggs]
    stats = AggregateStats(
        mean_precision=statistics.fmean(precisions),
        mean_recall=statistics.fmean(recalls),
        macro_f1=statistics.fmean(macro_f1s),
        f1_of_means=statistics.fmean(a.f1_of_means for a in aggs),
        stddev_precision=spread(precisions),
        stddev_recall=spread(recalls),
        stddev_f1=spread(macro_f1s),
        n_splits=len(aggs),
    )
    per_instance = [score for split in splits for score in split]
    return EvalReport(per_instance=tuple(per_instance), splits=tuple(aggs), aggregate=stats)
