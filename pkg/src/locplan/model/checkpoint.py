"""Checkpoint container: config echo + flat parameter arrays in one .npz."""

from __future__ import annotations

import json

import numpy as np

from ..errors import ConfigError
from .config import ModelConfig, config_from_dict, config_to_dict

__all__ = ["save_checkpoint", "load_checkpoint"]

_META_KEY = "__meta__"


def save_checkpoint(path, params: dict, config: ModelConfig, meta: dict | None = None) -> None:
    doc = {"config": config_to_dict(config), "meta": meta or {}}
    arrays = {_META_KEY: np.frombuffer(json.dumps(doc, sort_keys=True).encode(), dtype=np.uint8)}
    arrays.update(params)
    np.savez(path, **arrays)


def load_checkpoint(path, expect_config: ModelConfig | None = None):
    """Load (params, config, meta); rejects a config mismatch when one is expected."""
    with np.load(path) as data:
        if _META_KEY not in data:
            raise ConfigError(f"{path} is not a model checkpoint")
        doc = json.loads(bytes(data[_META_KEY]).decode())
        params = {k: data[k].copy() for k in data.files if k != _META_KEY}
    config = config_from_dict(doc["config"])
    if expect_config is not None and config != expect_config:
        raise ConfigError(
            "checkpoint config does not match the expected configuration"
        )
    return params, config, doc.get("meta", {})
