import math

import pytest
from hypothesis import given, strategies as st

from punchline.types import (
    MAX_CANDIDATES,
    AggregateStats,
    AttributionReport,
    CandidateExplanation,
    Description,
    Episode,
    EvalReport,
    HopState,
    Implication,
    InstanceScore,
    PipelineConfig,
    SplitAggregate,
    count_tokens,
)

texts = st.text(min_size=1, max_size=40).filter(lambda s: s.strip())
finite = st.floats(allow_nan=False, allow_infinity=False, width=32)
unit_fractions = st.floats(min_value=0.0, max_value=1.0)


@st.composite
def unit_vectors(draw):
    raw = draw(
        st.lists(
            st.floats(min_value=-1.0, max_value=1.0, allow_nan=False),
            min_size=2,
            max_size=8,
        ).filter(lambda v: math.sqrt(sum(x * x for x in v)) > 1e-3)
    )
    norm = math.sqrt(sum(x * x for x in raw))
    return tuple(x / norm for x in raw)


@st.composite
def implications(draw, scored=None):
    with_scores = draw(st.booleans()) if scored is None else scored
    if with_scores:
        return Implication(
            text=draw(texts),
            hop_born=draw(st.integers(min_value=1, max_value=5)),
            embedding=draw(unit_vectors()),
            compression_score=draw(finite),
            relevance_score=draw(finite),
            combined_score=draw(finite),
        )
    return Implication(text=draw(texts), hop_born=draw(st.integers(min_value=1, max_value=5)))


@st.composite
def candidates(draw):
    return CandidateExplanation(
        text=draw(texts),
        hop_born=draw(st.integers(min_value=0, max_value=5)),
        token_length=draw(st.integers(min_value=1, max_value=300)),
        cross_entropy=draw(st.none() | st.floats(min_value=0, max_value=50, allow_nan=False)),
        length_penalty=draw(st.none() | st.floats(min_value=0, max_value=50, allow_nan=False)),
    )


@st.composite
def hop_states(draw):
    pool = draw(st.lists(implications(), max_size=6))
    n_selected = draw(st.integers(min_value=0, max_value=len(pool)))
    return HopState(
        hop=draw(st.integers(min_value=0, max_value=4)),
        descriptions=tuple(
            Description(text=t) for t in draw(st.lists(texts, max_size=3))
        ),
        implication_pool=tuple(pool),
        selected_implications=tuple(pool[:n_selected]),
        candidates=tuple(draw(st.lists(candidates(), min_size=0, max_size=MAX_CANDIDATES))),
    )


class TestRoundTrips:
    @given(implications())
    def test_implication(self, imp):
        assert Implication.from_dict(imp.to_dict()) == imp

    @given(candidates())
    def test_candidate(self, cand):
        assert CandidateExplanation.from_dict(cand.to_dict()) == cand

    @given(hop_states())
    def test_hop_state(self, state):
        assert HopState.from_dict(state.to_dict()) == state

    @given(
        st.floats(min_value=0, max_value=10, allow_nan=False),
        st.integers(min_value=0, max_value=5),
        st.integers(min_value=1, max_value=5),
    )
    def test_pipeline_config(self, alpha, hops, k):
        cfg = PipelineConfig(alpha=alpha, hops=hops, k=k, max_pool=k + 10)
        assert PipelineConfig.from_dict(cfg.to_dict()) == cfg

    @given(unit_fractions, unit_fractions, unit_fractions)
    def test_instance_score(self, p, r, f):
        score = InstanceScore(
            id="x", precision=p, recall=r, f1=f,
            atom_verdicts=(("recall: a", True), ("precision: b", False)),
        )
        assert InstanceScore.from_dict(score.to_dict()) == score

    def test_eval_report(self):
        inst = InstanceScore(id="a", precision=1.0, recall=0.5, f1=2 / 3)
        split = SplitAggregate(
            mean_precision=1.0, mean_recall=0.5, macro_f1=2 / 3,
            f1_of_means=2 / 3, n_scored=1,
        )
        agg = AggregateStats(
            mean_precision=1.0, mean_recall=0.5, macro_f1=2 / 3, f1_of_means=2 / 3,
            stddev_precision=0.0, stddev_recall=0.0, stddev_f1=0.0, n_splits=1,
        )
        report = EvalReport(per_instance=(inst,), splits=(split,), aggregate=agg)
        assert EvalReport.from_dict(report.to_dict()) == report

    def test_attribution_report_with_missing_phi(self):
        report = AttributionReport(
            sentences=("One.", "Two."), base_response="resp",
            phi=(0.25, None), samples_used=3, ratio=0.5,
        )
        assert AttributionReport.from_dict(report.to_dict()) == report


class TestValidation:
    def test_episode_rejects_blank_fields(self):
        with pytest.raises(ValueError):
            Episode(id="", image=b"x", caption="c", dataset="newyorker")
        with pytest.raises(ValueError):
            Episode(id="e", image=b"x", caption="   ", dataset="newyorker")
        with pytest.raises(ValueError):
            Episode(id="e", image=b"x", caption="c", dataset="reddit")

    def test_description_sentence_count_bounds(self):
        with pytest.raises(ValueError):
            Description(text="t", sentence_count=0)
        with pytest.raises(ValueError):
            Description(text="t", sentence_count=6)
        Description(text="t", sentence_count=5)

    def test_implication_hop_born_starts_at_one(self):
        with pytest.raises(ValueError):
            Implication(text="t", hop_born=0)

    def test_implication_embedding_must_be_unit(self):
        with pytest.raises(ValueError):
            Implication(text="t", embedding=(0.5, 0.5))
        Implication(text="t", embedding=(0.6, 0.8))

    def test_candidate_bounds(self):
        with pytest.raises(ValueError):
            CandidateExplanation(text="  ")
        with pytest.raises(ValueError):
            CandidateExplanation(text="t", token_length=0)
        with pytest.raises(ValueError):
            CandidateExplanation(text="t", cross_entropy=-0.1)
        with pytest.raises(ValueError):
            CandidateExplanation(text="t", hop_born=-1)

    def test_hop_state_candidate_cap(self):
        too_many = tuple(
            CandidateExplanation(text=f"c{i}") for i in range(MAX_CANDIDATES + 1)
        )
        with pytest.raises(ValueError):
            HopState(hop=0, candidates=too_many)

    def test_hop_state_selected_must_come_from_pool(self):
        pool = (Implication(text="in pool"),)
        stray = (Implication(text="not in pool"),)
        with pytest.raises(ValueError):
            HopState(hop=1, implication_pool=pool, selected_implications=stray)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": -0.1},
            {"hops": -1},
            {"k": 0},
            {"k": 5, "max_pool": 4},
            {"gen_temperature": -0.5},
            {"eval_temperature": -0.5},
            {"description_window": 0},
            {"max_output_tokens": 0},
            {"multi_ref": "median"},
        ],
    )
    def test_pipeline_config_rejects(self, kwargs):
        with pytest.raises(ValueError):
            PipelineConfig(**kwargs)

    def test_instance_score_bounds(self):
        with pytest.raises(ValueError):
            InstanceScore(id="x", precision=1.2, recall=0.5, f1=0.5)
        with pytest.raises(ValueError):
            InstanceScore(id="x", precision=0.5, recall=-0.1, f1=0.5)

    def test_attribution_report_shape_checks(self):
        with pytest.raises(ValueError):
            AttributionReport(
                sentences=("a.",), base_response="r", phi=(0.1, 0.2),
                samples_used=1, ratio=1.0,
            )
        with pytest.raises(ValueError):
            AttributionReport(
                sentences=("a.",), base_response="r", phi=(0.1,),
                samples_used=1, ratio=0.0,
            )
        with pytest.raises(ValueError):
            AttributionReport(
                sentences=("a.",), base_response="r", phi=(0.1,),
                samples_used=-1, ratio=1.0,
            )


class TestDefaults:
    def test_recommended_operating_point(self):
        cfg = PipelineConfig()
        assert cfg.alpha == 0.7
        assert cfg.hops == 2
        assert cfg.k == 3
        assert cfg.max_pool == 15
        assert cfg.gen_temperature == 0.8
        assert cfg.eval_temperature == 0.2
        assert cfg.description_window == 2
        assert cfg.multi_ref == "max"

    def test_count_tokens_whitespace(self):
        assert count_tokens("one two  three\nfour") == 4
        assert count_tokens("") == 0
        assert count_tokens("   ") == 0
