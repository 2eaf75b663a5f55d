"""Training loop (Adam), gradient entry point, and LocMap inference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..errors import ConfigError
from ..geom import Waypoint, crop_box, egocentric_transform, filter_uncertain
from ..locmap import LocMap
from ..sfm_io import SceneModel
from .config import ModelConfig, init_params, param_spec
from .network import FeaturizedSample, backward, batchify, featurize, forward, loss_from_logits

__all__ = ["TrainOptions", "gradients", "train", "predict_locmap", "probabilities_from_logits"]


@dataclass(frozen=True)
class TrainOptions:
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    class_weights: Optional[tuple] = None


def gradients(params, batch, labels, config: ModelConfig, class_weights=None):
    """Loss of a batch and exact gradients of its mean loss."""
    logits, cache = forward(params, batch, config)
    loss, dlogits = loss_from_logits(logits, labels, config.n_classes, class_weights)
    return loss, backward(params, cache, dlogits, config)


def train(samples: Sequence, config: ModelConfig, opts: TrainOptions = TrainOptions()):
    """Train on oracle-labeled samples; deterministic per seed.

    Each sample is featurized once with a seed derived from its index, so the
    subsampling streams are fixed. Batches are assembled from a seeded
    per-epoch shuffle; gradients accumulate in sample-index order inside the
    batch tensor, keeping the whole run reproducible.

    Returns:
        (params, history) where history holds the per-epoch mean loss.
    """
    if len(samples) == 0:
        raise ConfigError("training dataset is empty")
    feats: List[FeaturizedSample] = []
    labels: List[np.ndarray] = []
    for idx, s in enumerate(samples):
        feats.append(featurize(s.poses, s.landmarks, config, seed=opts.seed + idx))
        lab = np.asarray(s.labels)
        if lab.shape != config.grid.shape:
            raise ConfigError("sample label shape does not match the model grid")
        labels.append(lab)

    cw = None if opts.class_weights is None else np.asarray(opts.class_weights)
    params = init_params(config)
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v) for k, v in params.items()}
    rng = np.random.default_rng(np.random.SeedSequence([opts.seed, 4]))
    history: List[float] = []
    step = 0
    n = len(samples)

    for _epoch in range(opts.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, opts.batch_size):
            sel = order[start : start + opts.batch_size]
            batch = batchify([feats[i] for i in sel])
            batch_labels = np.stack([labels[i] for i in sel])
            loss, grads = gradients(params, batch, batch_labels, config, cw)
            epoch_loss += loss * len(sel)
            step += 1
            lr_t = (
                opts.learning_rate
                * np.sqrt(1.0 - opts.beta2**step)
                / (1.0 - opts.beta1**step)
            )
            for k in params:
                g = grads[k]
                m[k] = opts.beta1 * m[k] + (1.0 - opts.beta1) * g
                v[k] = opts.beta2 * v[k] + (1.0 - opts.beta2) * g * g
                params[k] -= lr_t * m[k] / (np.sqrt(v[k]) + opts.adam_eps)
        history.append(epoch_loss / n)
    return params, history


def probabilities_from_logits(logits: np.ndarray, n_classes: int) -> np.ndarray:
    """Per-cell scalar quality score in [0, 1].

    Binary: sigmoid. Multi-class: expected quality level normalized by the
    top level, so higher still means easier to localize.
    """
    if n_classes == 2:
        return 1.0 / (1.0 + np.exp(-logits))
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    p = e / e.sum(axis=-1, keepdims=True)
    levels = np.arange(n_classes, dtype=np.float64)
    return (p * levels).sum(axis=-1) / (n_classes - 1)


def predict_locmap(
    params: dict, scene: SceneModel, wp: Waypoint, config: ModelConfig
) -> LocMap:
    """Predicted localization-quality map at a waypoint.

    Runs the same preprocessing chain as dataset generation (uncertainty
    filter, egocentric shift, crop), featurizes with the config seed, and
    applies the network. Values are probabilities in [0, 1].
    """
    if scene.n_poses == 0:
        raise ConfigError("scene has no mapping poses")
    filtered = filter_uncertain(scene.landmarks, config.min_track, config.max_reproj)
    poses, landmarks = egocentric_transform(scene.poses, filtered, wp)
    landmarks = crop_box(landmarks, config.crop_half_extent)
    feat = featurize(poses, landmarks, config)
    batch = batchify([feat])
    logits, _ = forward(params, batch, config)
    values = probabilities_from_logits(logits, config.n_classes)[0]
    return LocMap(config.grid, values)
