"""punchline: explain multimodal humor by eliciting world-knowledge
implications and selecting them with an information-bottleneck objective."""

from .backends import BackendConfig, Backends, build_backends
from .data import load_dataset, sample_split
from .pipeline import run_baseline, run_episode
from .records import EpisodeRecord, RecordWriter, read_records
from .types import (
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
)

__version__ = "0.1.0"

__all__ = [
    "AggregateStats",
    "AttributionReport",
    "BackendConfig",
    "Backends",
    "CandidateExplanation",
    "Description",
    "Episode",
    "EpisodeRecord",
    "EvalReport",
    "HopState",
    "Implication",
    "InstanceScore",
    "PipelineConfig",
    "RecordWriter",
    "SplitAggregate",
    "build_backends",
    "load_dataset",
    "read_records",
    "run_baseline",
    "run_episode",
    "sample_split",
    "__version__",
]
