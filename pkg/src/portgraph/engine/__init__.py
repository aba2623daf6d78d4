"""Differentiable temporal graph model with its own gradient engine."""

from .autodiff import Tensor
from .model import (
    ModelParameters,
    TrainConfig,
    compute_class_weights,
    init_parameters,
    model_forward,
    predict,
    weighted_cross_entropy,
)
from .training import (
    EpochRecord,
    FoldResult,
    OptimizerState,
    adam_step,
    checkpoint_from_json,
    checkpoint_to_json,
    train,
    train_fold,
)

__all__ = [
    "EpochRecord",
    "FoldResult",
    "ModelParameters",
    "OptimizerState",
    "Tensor",
    "TrainConfig",
    "adam_step",
    "checkpoint_from_json",
    "checkpoint_to_json",
    "compute_class_weights",
    "init_parameters",
    "model_forward",
    "predict",
    "train",
    "train_fold",
    "weighted_cross_entropy",
]
