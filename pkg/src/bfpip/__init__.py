"""Offline-verifiable evaluation harness for zero-shot pedestrian crossing-intention prediction."""

from .clipper import ObservationWindow, compute_window
from .dataset import DatasetManifest, Label, PedestrianInstance, filter_split, parse_manifest
from .metrics import EvalMetrics, auc_score, classification_metrics
from .promptkit import ALL_CONFIGS, ModalityConfig, build_prompt
from .protocol import PredictionRecord, ProtocolConfig, aggregate_repeats, parse_response

__version__ = "0.1.0"

__all__ = [
    "ALL_CONFIGS",
    "DatasetManifest",
    "EvalMetrics",
    "Label",
    "ModalityConfig",
    "ObservationWindow",
    "PedestrianInstance",
    "PredictionRecord",
    "ProtocolConfig",
    "aggregate_repeats",
    "auc_score",
    "build_prompt",
    "classification_metrics",
    "compute_window",
    "filter_split",
    "parse_manifest",
    "parse_response",
]
