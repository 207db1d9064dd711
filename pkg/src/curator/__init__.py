"""Curation and evaluation engine for webly-annotated short-video corpora."""

from .model import (
    CleaningVerdict,
    CorpusError,
    FeatureVector,
    FrameRecord,
    GroundTruth,
    LabelScoreSet,
    RankedPrediction,
    TitleTokenization,
    Token,
    TokenGrid,
    ValidationReport,
    VideoRecord,
    validate_corpus,
)
from .ingest import SidecarBundle, load_manifest, load_sidecars, save_manifest, save_sidecars
from .clean import CleanConfig, PercentileThresholds, run_pipeline
from .preselect import PreselectConfig, nearest_neighbors, preselect_candidates, vote_tags
from .vtr import combine_losses, reduce_tokens
from .service import AnnotationEvent, AnnotationStore, WorkflowError, create_app

__version__ = "0.1.0"

__all__ = [
    "AnnotationEvent",
    "AnnotationStore",
    "CleanConfig",
    "CleaningVerdict",
    "CorpusError",
    "FeatureVector",
    "FrameRecord",
    "GroundTruth",
    "LabelScoreSet",
    "PercentileThresholds",
    "PreselectConfig",
    "RankedPrediction",
    "SidecarBundle",
    "TitleTokenization",
    "Token",
    "TokenGrid",
    "ValidationReport",
    "VideoRecord",
    "WorkflowError",
    "combine_losses",
    "create_app",
    "load_manifest",
    "load_sidecars",
    "nearest_neighbors",
    "preselect_candidates",
    "reduce_tokens",
    "run_pipeline",
    "save_manifest",
    "save_sidecars",
    "validate_corpus",
    "vote_tags",
    "__version__",
]
