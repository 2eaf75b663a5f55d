"""Model configuration and parameter initialization."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from ..errors import ConfigError
from ..geom import (
    DEFAULT_CROP_HALF_EXTENT,
    DEFAULT_MAX_REPROJ,
    DEFAULT_MIN_TRACK,
    ViewGrid,
)

INPUT_MODES = ("full", "cam", "map")

POSE_FEAT_DIM = 7  # camera center + unit quaternion (wxyz)
LM_FEAT_DIM = 6  # position + rgb


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and preprocessing knobs; echoed into every checkpoint."""

    d_model: int = 64
    n_heads: int = 4
    n_self_layers: int = 2
    n_cross_layers: int = 2
    mlp_hidden: int = 128
    grid: ViewGrid = field(default_factory=ViewGrid)
    n_classes: int = 2
    max_landmarks: int = 2048
    max_poses: int = 256
    seed: int = 0
    input_mode: str = "full"  # "full", "cam" (poses only), "map" (landmarks only)
    min_track: int = DEFAULT_MIN_TRACK
    max_reproj: float = DEFAULT_MAX_REPROJ
    crop_half_extent: float = DEFAULT_CROP_HALF_EXTENT

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.n_classes not in (2, 4):
            raise ConfigError("n_classes must be 2 or 4")
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(f"input_mode must be one of {INPUT_MODES}")
        if min(self.max_landmarks, self.max_poses) < 1:
            raise ConfigError("sequence caps must be positive")

    @property
    def uses_poses(self) -> bool:
        return self.input_mode in ("full", "cam")

    @property
    def uses_landmarks(self) -> bool:
        return self.input_mode in ("full", "map")

    @property
    def out_per_cell(self) -> int:
        return 1 if self.n_classes == 2 else self.n_classes

    @property
    def head_in_dim(self) -> int:
        return 2 * self.d_model if self.input_mode == "full" else self.d_model

    @property
    def out_dim(self) -> int:
        return self.grid.n_pitch * self.grid.n_yaw * self.out_per_cell


def _attn_spec(prefix, d):
    return [
        (prefix + "Wq", (d, d)),
        (prefix + "bq", (d,)),
        (prefix + "Wk", (d, d)),
        (prefix + "bk", (d,)),
        (prefix + "Wv", (d, d)),
        (prefix + "bv", (d,)),
        (prefix + "Wo", (d, d)),
        (prefix + "bo", (d,)),
    ]


def _block_spec(prefix, d):
    ff = 2 * d
    spec = [
        (prefix + "ln1/g", (d,)),
        (prefix + "ln1/b", (d,)),
    ]
    spec += _attn_spec(prefix + "attn/", d)
    spec += [
        (prefix + "ln2/g", (d,)),
        (prefix + "ln2/b", (d,)),
        (prefix + "ffn/W1", (d, ff)),
        (prefix + "ffn/b1", (ff,)),
        (prefix + "ffn/W2", (ff, d)),
        (prefix + "ffn/b2", (d,)),
    ]
    return spec


def _cross_side_spec(prefix, d):
    spec = [
        (prefix + "ln_q/g", (d,)),
        (prefix + "ln_q/b", (d,)),
        (prefix + "ln_kv/g", (d,)),
        (prefix + "ln_kv/b", (d,)),
    ]
    spec += _attn_spec(prefix + "attn/", d)
    spec += [
        (prefix + "ln2/g", (d,)),
        (prefix + "ln2/b", (d,)),
        (prefix + "ffn/W1", (d, 2 * d)),
        (prefix + "ffn/b1", (2 * d,)),
        (prefix + "ffn/W2", (2 * d, d)),
        (prefix + "ffn/b2", (d,)),
    ]
    return spec


def param_spec(config: ModelConfig):
    """Ordered (name, shape) pairs of every parameter the config defines."""
    d = config.d_model
    spec = []
    if config.uses_poses:
        spec += [("pose_embed/W", (POSE_FEAT_DIM, d)), ("pose_embed/b", (d,))]
        for i in range(config.n_self_layers):
            spec += _block_spec(f"pose_enc{i}/", d)
    if config.uses_landmarks:
        spec += [("lm_embed/W", (LM_FEAT_DIM, d)), ("lm_embed/b", (d,))]
        for i in range(config.n_self_layers):
            spec += _block_spec(f"lm_enc{i}/", d)
    if config.input_mode == "full":
        for i in range(config.n_cross_layers):
            spec += _cross_side_spec(f"cross{i}/p/", d)
            spec += _cross_side_spec(f"cross{i}/l/", d)
    spec += [
        ("head/W1", (config.head_in_dim, config.mlp_hidden)),
        ("head/b1", (config.mlp_hidden,)),
        ("head/W2", (config.mlp_hidden, config.out_dim)),
        ("head/b2", (config.out_dim,)),
    ]
    return spec


def init_params(config: ModelConfig) -> dict:
    """Seeded Glorot-uniform weights, zero biases, unit LayerNorm gains."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    params = {}
    for name, shape in param_spec(config):
        if name.endswith("/g"):
            params[name] = np.ones(shape)
        elif len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def config_to_dict(config: ModelConfig) -> dict:
    doc = {}
    for f in fields(config):
        v = getattr(config, f.name)
        if f.name == "grid":
            v = {
                "n_pitch": v.n_pitch,
                "n_yaw": v.n_yaw,
                "pitch_min": v.pitch_min,
                "pitch_step": v.pitch_step,
                "yaw_min": v.yaw_min,
                "yaw_step": v.yaw_step,
            }
        doc[f.name] = v
    return doc


def config_from_dict(doc: dict) -> ModelConfig:
    doc = dict(doc)
    doc["grid"] = ViewGrid(**doc["grid"])
    return ModelConfig(**doc)
