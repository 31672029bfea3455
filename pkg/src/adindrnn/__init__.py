"""Dense IndRNN with channel attention for EEG seizure classification."""

from .estimator import ADIndRNNClassifier
from .model import BlockSpec, ModelParams, ModelSpec, build_model, extract_attention_weights, model_forward
from .training import TrainConfig, aggregate_cv, compute_metrics, train

__version__ = "0.1.0"

__all__ = [
    "ADIndRNNClassifier",
    "BlockSpec",
    "ModelParams",
    "ModelSpec",
    "build_model",
    "extract_attention_weights",
    "model_forward",
    "TrainConfig",
    "aggregate_cv",
    "compute_metrics",
    "train",
]
