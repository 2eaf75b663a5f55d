"""Attention network predicting localization-quality maps from SfM inputs."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, init_params, param_spec
from .network import (
    FeaturizedSample,
    backward,
    batchify,
    featurize,
    forward,
    loss_from_logits,
)
from .training import (
    TrainOptions,
    gradients,
    predict_locmap,
    probabilities_from_logits,
    train,
)

__all__ = [
    "ModelConfig",
    "init_params",
    "param_spec",
    "FeaturizedSample",
    "featurize",
    "batchify",
    "forward",
    "backward",
    "loss_from_logits",
    "gradients",
    "train",
    "TrainOptions",
    "predict_locmap",
    "probabilities_from_logits",
    "save_checkpoint",
    "load_checkpoint",
]
