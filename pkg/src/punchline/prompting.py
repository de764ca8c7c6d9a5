"""Prompt templates, rendering, output parsing, and the generation steps that
turn backend text into typed objects.

Templates are plain-text assets with `{placeholder}` fields, loadable from an
overridable directory. Per-dataset wording (the task goal line, the goal
clause, the critic intro) is injected automatically when a template asks for
it and the caller names the dataset.
"""

from __future__ import annotations

import json
import logging
import re
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .backends import Generator, GenerationRequest
from .errors import GenerationError, TemplateError
from .types import (
    CandidateExplanation,
    Description,
    Episode,
    Implication,
    PipelineConfig,
    count_tokens,
)

log = logging.getLogger(__name__)

TEMPLATE_NAMES = (
    "description",
    "seed_implication",
    "followup_implication",
    "candidate",
    "final",
    "zs",
    "cot",
    "sr_generator",
    "sr_critic",
    "decompose",
    "verify_recall",
    "verify_precision",
)

MAX_DESCRIPTIONS = 5
MAX_IMPLICATIONS_PER_CALL = 3

_DATASET_FIELDS = ("task_goal", "goal_clause", "critic_intro")

_ENUM_MARKER = re.compile(r"^(?:\d+[.)](?:\s+|$)|[-*]\s+)")
_BRACKET_LABEL = re.compile(r"^\[[^\]]*\]:?\s*$")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def placeholders(self) -> set[str]:
        return {
            field
            for _, field, _, _ in string.Formatter().parse(self.body)
            if field is not None and field != ""
        }

    def render(self, **values: str) -> str:
        try:
            return self.body.format(**values)
        except (KeyError, IndexError) as exc:
            raise TemplateError(
                f"template {self.name!r} missing placeholder value: {exc}"
            ) from exc


@dataclass(frozen=True)
class TemplateSet:
    templates: dict[str, PromptTemplate]
    dataset_lines: dict[str, dict[str, str]]

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "TemplateSet":
        if directory is None:
            directory = Path(str(resources.files("punchline"))) / "templates"
        directory = Path(directory)
        templates: dict[str, PromptTemplate] = {}
        for name in TEMPLATE_NAMES:
            path = directory / f"{name}.txt"
            if not path.exists():
                raise TemplateError(f"template file missing: {path}")
            templates[name] = PromptTemplate(name, path.read_text(encoding="utf-8"))
        lines_path = directory / "dataset_lines.json"
        if not lines_path.exists():
            raise TemplateError(f"dataset line file missing: {lines_path}")
        dataset_lines = json.loads(lines_path.read_text(encoding="utf-8"))
        return cls(templates=templates, dataset_lines=dataset_lines)

    def get(self, name: str) -> PromptTemplate:
        try:
            return self.templates[name]
        except KeyError:
            raise TemplateError(f"unknown template {name!r}") from None

    def render(self, name: str, dataset: str | None = None, **values: str) -> str:
        tpl = self.get(name)
        needed = tpl.placeholders()
        merged = dict(values)
        for field in _DATASET_FIELDS:
            if field in needed and field not in merged:
                if dataset is None:
                    raise TemplateError(
                        f"template {name!r} needs {field!r}; pass dataset or the value"
                    )
                try:
                    merged[field] = self.dataset_lines[field][dataset]
                except KeyError:
                    raise TemplateError(
                        f"no {field!r} line for dataset {dataset!r}"
                    ) from None
        return tpl.render(**merged)


def format_block(items: Sequence[str], empty: str = "None.") -> str:
    lines = [s for s in (str(i).strip() for i in items) if s]
    return "\n".join(lines) if lines else empty


def parse_numbered_list(text: str) -> list[str]:
    """Newline-split with enumeration markers ('1.', '1)', '-', '*') and
    bracketed section labels stripped; empty lines dropped."""
    items: list[str] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or _BRACKET_LABEL.match(line):
            continue
        line = _ENUM_MARKER.sub("", line).strip()
        if line:
            items.append(line)
    return items


def parse_cot_response(text: str) -> tuple[str, bool]:
    """Extract the Explanation field from a CoT JSON response.

    Returns (explanation, used_fallback); on any parse failure the raw text
    comes back with the fallback flag set.
    """
    stripped = text.strip()
    body = stripped
    if body.startswith("```"):
        body = re.sub(r"^```[a-zA-Z]*\s*|```$", "", body).strip()
    start, end = body.find("{"), body.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(body[start : end + 1])
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            value = obj.get("Explanation", obj.get("explanation"))
            if isinstance(value, str) and value.strip():
                return value.strip(), False
    log.warning("could not parse CoT response, using raw text")
    return stripped, True


def complete_prompt(
    generator: Generator,
    prompt: str,
    cfg: PipelineConfig,
    image: str | bytes | None = None,
) -> str:
    return generator.generate(
        GenerationRequest(
            prompt=prompt,
            image=image,
            temperature=cfg.gen_temperature,
            max_output_tokens=cfg.max_output_tokens,
            seed=cfg.rng_seed,
        )
    )


def generate_descriptions(
    episode: Episode,
    generator: Generator,
    templates: TemplateSet,
    cfg: PipelineConfig,
) -> list[Description]:
    """Elicit up to five one-sentence literal descriptions of the image."""
    prompt = templates.render("description", dataset=episode.dataset)
    text = complete_prompt(generator, prompt, cfg, image=episode.image)
    lines = parse_numbered_list(text)
    if not lines:
        raise GenerationError(f"episode {episode.id}: empty description output")
    return [Description(text=t, sentence_count=1) for t in lines[:MAX_DESCRIPTIONS]]


def dedup_implications(implications: Sequence[Implication]) -> list[Implication]:
    seen: set[str] = set()
    out = []
    for imp in implications:
        if imp.text in seen:
            continue
        seen.add(imp.text)
        out.append(imp)
    return out


def description_windows(
    descriptions: Sequence[Description], window: int
) -> list[list[Description]]:
    """Sliding windows of consecutive descriptions, stride 1; fewer
    descriptions than the window size form a single window."""
    descriptions = list(descriptions)
    if len(descriptions) <= window:
        return [descriptions]
    return [
        descriptions[i : i + window]
        for i in range(len(descriptions) - window + 1)
    ]


def generate_seed_implications(
    episode: Episode,
    descriptions: Sequence[Description],
    generator: Generator,
    templates: TemplateSet,
    cfg: PipelineConfig,
) -> list[Implication]:
    """First-hop implications: one call per description window, up to three
    implications each, exact-duplicate texts removed."""
    if not descriptions:
        raise GenerationError(f"episode {episode.id}: no descriptions to seed from")
    pool: list[Implication] = []
    failures = 0
    windows = description_windows(descriptions, cfg.description_window)
    for window in windows:
        prompt = templates.render(
            "seed_implication",
            dataset=episode.dataset,
            caption=episode.caption,
            descriptions=format_block([d.text for d in window]),
        )
        try:
            text = complete_prompt(generator, prompt, cfg, image=episode.image)
        except GenerationError:
            raise
        except Exception as exc:
            log.warning("episode %s: seed window failed: %s", episode.id, exc)
            failures += 1
            continue
        for line in parse_numbered_list(text)[:MAX_IMPLICATIONS_PER_CALL]:
            pool.append(Implication(text=line, hop_born=1))
    if failures == len(windows):
        raise GenerationError(f"episode {episode.id}: every seed window failed")
    return dedup_implications(pool)


def generate_followup_implications(
    episode: Episode,
    descriptions: Sequence[Description],
    implication: Implication,
    generator: Generator,
    templates: TemplateSet,
    cfg: PipelineConfig,
    hop_born: int,
) -> list[Implication]:
    """Deepen one previously selected implication into up to three new ones."""
    prompt = templates.render(
        "followup_implication",
        dataset=episode.dataset,
        caption=episode.caption,
        descriptions=format_block([d.text for d in descriptions]),
        implication=implication.text,
    )
    text = complete_prompt(generator, prompt, cfg, image=episode.image)
    return [
        Implication(text=t, hop_born=hop_born)
        for t in parse_numbered_list(text)[:MAX_IMPLICATIONS_PER_CALL]
    ]


def generate_candidate(
    episode: Episode,
    descriptions: Sequence[Description],
    implications_for_context: Sequence[Implication],
    prior_candidates: Sequence[CandidateExplanation],
    generator: Generator,
    templates: TemplateSet,
    cfg: PipelineConfig,
    hop_born: int,
) -> CandidateExplanation | None:
    """One candidate explanation; descriptions participate here (unlike the
    final answer). Empty generations return None so the caller can drop them."""
    prompt = templates.render(
        "candidate",
        dataset=episode.dataset,
        caption=episode.caption,
        descriptions=format_block([d.text for d in descriptions]),
        implications=format_block([i.text for i in implications_for_context]),
        candidates=format_block([c.text for c in prior_candidates]),
    )
    text = complete_prompt(generator, prompt, cfg, image=episode.image).strip()
    if not text:
        log.warning("episode %s: empty candidate generation dropped", episode.id)
        return None
    return CandidateExplanation(
        text=text, hop_born=hop_born, token_length=max(1, count_tokens(text))
    )


def render_final_prompt(
    episode: Episode,
    implications: Sequence[Implication],
    candidates: Sequence[CandidateExplanation],
    templates: TemplateSet,
) -> str:
    """Final-answer prompt: caption, selected implications, retained
    candidates. Image descriptions are deliberately absent."""
    return templates.render(
        "final",
        dataset=episode.dataset,
        caption=episode.caption,
        implications=format_block([i.text for i in implications]),
        candidates=format_block([c.text for c in candidates]),
    )


def generate_final_answer(
    episode: Episode,
    implications: Sequence[Implication],
    candidates: Sequence[CandidateExplanation],
    generator: Generator,
    templates: TemplateSet,
    cfg: PipelineConfig,
) -> str:
    prompt = render_final_prompt(episode, implications, candidates, templates)
    text = complete_prompt(generator, prompt, cfg, image=episode.image).strip()
    if not text:
        raise GenerationError(f"episode {episode.id}: empty final answer")
    return text
