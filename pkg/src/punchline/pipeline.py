"""Episode drivers: the hop-structured pipeline and the single-pass baselines.

Both entry points return an EpisodeRecord and never raise for backend
trouble; the record's status says how far the run got ("ok", "partial" once
at least one hop completed, otherwise "failed") and the error field carries
the reason. Only bad arguments (an unknown baseline mode) raise directly.
"""

from __future__ import annotations

import hashlib
import logging

from .backends import Backends, Generator
from .errors import GenerationError, InputError, ScoringError
from .prompting import (
    TemplateSet,
    complete_prompt,
    dedup_implications,
    format_block,
    generate_candidate,
    generate_descriptions,
    generate_final_answer,
    generate_followup_implications,
    generate_seed_implications,
    parse_cot_response,
    render_final_prompt,
)
from .records import EpisodeRecord
from .selection import (
    SelectionContext,
    candidate_scoring_context,
    cap_pool,
    select_candidates,
    select_implications,
)
from .types import (
    MODES,
    CandidateExplanation,
    Episode,
    HopState,
    Implication,
    PipelineConfig,
)

log = logging.getLogger(__name__)

BASELINE_MODES: tuple[str, ...] = tuple(m for m in MODES if m != "pipeline")

SELF_REFINE_ROUNDS = 2


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class _LoggingGenerator:
    """Pass-through generator that keeps (prompt, response) sha256 pairs for
    every call that succeeded; failed calls leave no entry."""

    def __init__(self, inner: Generator):
        self.inner = inner
        self.pairs: list[tuple[str, str]] = []

    def generate(self, request) -> str:
        response = self.inner.generate(request)
        self.pairs.append((_sha(request.prompt), _sha(response)))
        return response


def _hop_summary(state: HopState) -> dict:
    ces = [c.cross_entropy for c in state.candidates if c.cross_entropy is not None]
    return {
        "hop": state.hop,
        "best_cross_entropy": min(ces) if ces else None,
        "n_candidates": len(state.candidates),
    }


def run_episode(
    episode: Episode,
    cfg: PipelineConfig,
    backends: Backends,
    templates: TemplateSet | None = None,
) -> EpisodeRecord:
    """Run the full hop loop for one episode.

    Hop 0 elicits descriptions, the seed implication pool, and a single
    initial candidate. Each later hop caps the pool, selects up to k
    implications, drafts one candidate per pick, re-prunes the candidate set,
    and (below the last hop) expands the picks into the next pool. The final
    answer conditions on the last hop's selections and the retained
    candidates only; descriptions stay out of that prompt.
    """
    templates = templates if templates is not None else TemplateSet.load()
    gen = _LoggingGenerator(backends.generator)
    hop_states: list[HopState] = []
    flags: list[str] = []
    final_answer: str | None = None
    final_prompt: str | None = None
    error: str | None = None
    try:
        descriptions = tuple(generate_descriptions(episode, gen, templates, cfg))
        pool: list[Implication] = generate_seed_implications(
            episode, descriptions, gen, templates, cfg
        )
        initial = generate_candidate(
            episode, descriptions, [], [], gen, templates, cfg, hop_born=0
        )
        if initial is None:
            raise GenerationError(f"episode {episode.id}: empty initial candidate")
        candidates: tuple[CandidateExplanation, ...] = (initial,)
        prior_selected: list[Implication] = []
        hop_states.append(
            HopState(hop=0, descriptions=descriptions, candidates=candidates)
        )
        for hop in range(1, cfg.hops + 1):
            capped = cap_pool(pool, backends.embedder, cfg.max_pool, cfg.rng_seed)
            if len(capped) < len(pool):
                flags.append(f"hop_{hop}_pool_capped")
            sel_ctx = SelectionContext.build(
                episode.caption, descriptions, prior_selected, candidates,
                backends.embedder,
            )
            selected = select_implications(
                capped, sel_ctx, cfg.k, cfg.alpha, backends.embedder, backends.scorer
            )
            fresh = []
            for imp in selected:
                cand = generate_candidate(
                    episode, descriptions, [imp], candidates, gen, templates, cfg,
                    hop_born=hop,
                )
                if cand is not None:
                    fresh.append(cand)
            if selected and not fresh:
                flags.append(f"hop_{hop}_candidate_fallback")
            if fresh:
                context = candidate_scoring_context(
                    episode.caption, descriptions, selected, candidates
                )
                try:
                    candidates = tuple(
                        select_candidates(
                            [*fresh, *candidates], context, cfg.k, backends.scorer
                        )
                    )
                except ScoringError as exc:
                    log.warning(
                        "episode %s hop %d keeps previous candidates: %s",
                        episode.id, hop, exc,
                    )
                    flags.append(f"hop_{hop}_candidate_scoring_failed")
            prior_selected.extend(selected)
            hop_states.append(
                HopState(
                    hop=hop,
                    descriptions=descriptions,
                    implication_pool=tuple(capped),
                    selected_implications=tuple(selected),
                    candidates=candidates,
                )
            )
            if hop < cfg.hops:
                expanded: list[Implication] = []
                for imp in selected:
                    expanded.extend(
                        generate_followup_implications(
                            episode, descriptions, imp, gen, templates, cfg,
                            hop_born=hop + 1,
                        )
                    )
                pool = dedup_implications(expanded)
        last_selected = hop_states[-1].selected_implications
        final_prompt = render_final_prompt(
            episode, last_selected, candidates, templates
        )
        final_answer = generate_final_answer(
            episode, last_selected, candidates, gen, templates, cfg
        )
        status = "ok"
    except Exception as exc:
        log.warning("episode %s stopped: %s", episode.id, exc)
        error = str(exc)
        status = "partial" if hop_states else "failed"
    return EpisodeRecord(
        episode_id=episode.id,
        mode="pipeline",
        config=cfg.to_dict(),
        status=status,
        hop_states=tuple(hop_states),
        final_answer=final_answer,
        final_prompt=final_prompt,
        per_hop_best=tuple(_hop_summary(s) for s in hop_states),
        call_log=tuple(gen.pairs),
        flags=tuple(flags),
        error=error,
    )


def _require_text(text: str, episode: Episode) -> str:
    text = text.strip()
    if not text:
        raise GenerationError(f"episode {episode.id}: empty baseline answer")
    return text


def _self_refine(
    episode: Episode,
    gen: Generator,
    templates: TemplateSet,
    cfg: PipelineConfig,
    use_critic: bool,
) -> tuple[str, str]:
    """Draft, then revise twice; each revision sees every prior candidate and
    either a fresh critique or a "None." feedback slot. Returns the last
    answer and the prompt that produced it."""
    prompt = templates.render("zs", dataset=episode.dataset, caption=episode.caption)
    answer = _require_text(
        complete_prompt(gen, prompt, cfg, image=episode.image), episode
    )
    previous = [answer]
    for _ in range(SELF_REFINE_ROUNDS):
        feedback = "None."
        if use_critic:
            critic_prompt = templates.render(
                "sr_critic",
                dataset=episode.dataset,
                caption=episode.caption,
                candidate=answer,
            )
            # the critic judges from text alone, so no image goes along
            feedback = complete_prompt(gen, critic_prompt, cfg).strip() or "None."
        prompt = templates.render(
            "sr_generator",
            dataset=episode.dataset,
            caption=episode.caption,
            candidates=format_block(previous),
            feedback=feedback,
        )
        answer = _require_text(
            complete_prompt(gen, prompt, cfg, image=episode.image), episode
        )
        previous.append(answer)
    return answer, prompt


def run_baseline(
    episode: Episode,
    mode: str,
    cfg: PipelineConfig,
    backends: Backends,
    templates: TemplateSet | None = None,
) -> EpisodeRecord:
    """Run one of the single-pass baselines: "zs" (one direct call), "cot"
    (one call, JSON reasoning parsed out), "sr" (draft plus two critiqued
    revisions), or "sr_noc" (the same loop with the critic disabled)."""
    if mode not in BASELINE_MODES:
        raise InputError(f"not a baseline mode: {mode!r}")
    templates = templates if templates is not None else TemplateSet.load()
    gen = _LoggingGenerator(backends.generator)
    flags: list[str] = []
    final_answer: str | None = None
    final_prompt: str | None = None
    error: str | None = None
    try:
        if mode == "zs":
            final_prompt = templates.render(
                "zs", dataset=episode.dataset, caption=episode.caption
            )
            final_answer = _require_text(
                complete_prompt(gen, final_prompt, cfg, image=episode.image), episode
            )
        elif mode == "cot":
            final_prompt = templates.render(
                "cot", dataset=episode.dataset, caption=episode.caption
            )
            raw = _require_text(
                complete_prompt(gen, final_prompt, cfg, image=episode.image), episode
            )
            final_answer, used_fallback = parse_cot_response(raw)
            if used_fallback:
                flags.append("cot_parse_fallback")
        else:
            final_answer, final_prompt = _self_refine(
                episode, gen, templates, cfg, use_critic=(mode == "sr")
            )
        status = "ok"
    except Exception as exc:
        log.warning("episode %s baseline %s failed: %s", episode.id, mode, exc)
        error = str(exc)
        status = "failed"
    return EpisodeRecord(
        episode_id=episode.id,
        mode=mode,
        config=cfg.to_dict(),
        status=status,
        final_answer=final_answer,
        final_prompt=final_prompt,
        call_log=tuple(gen.pairs),
        flags=tuple(flags),
        error=error,
    )
