"""Featurization, the attention network forward pass, and its backward pass.

Architecture: per-modality linear embeddings, pre-norm transformer encoder
blocks on each branch, a stack of bidirectional cross-attention blocks that
let pose tokens attend to landmark tokens and vice versa, masked mean
pooling per branch, and an MLP head that maps the pooled summary to one
logit set per view-grid cell. Single-modality configs drop the other branch
and the cross stack.

Inputs are unordered sets; there are no positional encodings, so outputs are
invariant to token permutations and to padding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..errors import DegenerateInputError, NumericError
from ..geom import Landmark, Pose
from .config import LM_FEAT_DIM, POSE_FEAT_DIM, ModelConfig, param_spec
from .layers import (
    attention_bwd,
    attention_fwd,
    gelu_bwd,
    gelu_fwd,
    layernorm_bwd,
    layernorm_fwd,
    linear_bwd,
    linear_fwd,
    masked_mean_bwd,
    masked_mean_fwd,
)

__all__ = ["FeaturizedSample", "featurize", "batchify", "forward", "backward", "loss_from_logits"]


@dataclass
class FeaturizedSample:
    pose_feat: np.ndarray  # (M, 7): camera center + canonical unit quaternion
    lm_feat: np.ndarray  # (N, 6): position + rgb


def featurize(
    poses: Sequence[Pose],
    landmarks: Sequence[Landmark],
    config: ModelConfig,
    seed=None,
) -> FeaturizedSample:
    """Build per-token feature rows, capping sequence lengths by seeded subsampling."""
    if config.input_mode == "full" and not poses and not landmarks:
        raise DegenerateInputError("no poses and no landmarks at this waypoint")
    if config.input_mode == "cam" and not poses:
        raise DegenerateInputError("pose-only model got zero poses")
    if config.input_mode == "map" and not landmarks:
        raise DegenerateInputError("landmark-only model got zero landmarks")

    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))

    pose_feat = np.zeros((len(poses), POSE_FEAT_DIM))
    for k, p in enumerate(poses):
        pose_feat[k, 0:3] = p.position
        pose_feat[k, 3:7] = p.orientation.wxyz
    lm_feat = np.zeros((len(landmarks), LM_FEAT_DIM))
    for k, lm in enumerate(landmarks):
        lm_feat[k, 0:3] = lm.position
        lm_feat[k, 3:6] = lm.color

    if pose_feat.shape[0] > config.max_poses:
        idx = np.sort(rng.choice(pose_feat.shape[0], config.max_poses, replace=False))
        pose_feat = pose_feat[idx]
    if lm_feat.shape[0] > config.max_landmarks:
        idx = np.sort(rng.choice(lm_feat.shape[0], config.max_landmarks, replace=False))
        lm_feat = lm_feat[idx]
    return FeaturizedSample(pose_feat, lm_feat)


def batchify(samples: Sequence[FeaturizedSample]) -> dict:
    """Pad a list of featurized samples into masked batch arrays."""
    b = len(samples)
    mp = max(1, max(s.pose_feat.shape[0] for s in samples))
    nl = max(1, max(s.lm_feat.shape[0] for s in samples))
    batch = {
        "pose": np.zeros((b, mp, POSE_FEAT_DIM)),
        "pose_mask": np.zeros((b, mp), dtype=bool),
        "lm": np.zeros((b, nl, LM_FEAT_DIM)),
        "lm_mask": np.zeros((b, nl), dtype=bool),
    }
    for k, s in enumerate(samples):
        m = s.pose_feat.shape[0]
        n = s.lm_feat.shape[0]
        batch["pose"][k, :m] = s.pose_feat
        batch["pose_mask"][k, :m] = True
        batch["lm"][k, :n] = s.lm_feat
        batch["lm_mask"][k, :n] = True
    return batch


def _encoder_block_fwd(x, mask, p, prefix, n_heads):
    a, ln1c = layernorm_fwd(x, p[prefix + "ln1/g"], p[prefix + "ln1/b"])
    attn, attc = attention_fwd(a, a, mask, p, prefix + "attn/", n_heads)
    x1 = x + attn
    f, ln2c = layernorm_fwd(x1, p[prefix + "ln2/g"], p[prefix + "ln2/b"])
    h1, _ = linear_fwd(f, p[prefix + "ffn/W1"], p[prefix + "ffn/b1"])
    ga, gc = gelu_fwd(h1)
    h2, _ = linear_fwd(ga, p[prefix + "ffn/W2"], p[prefix + "ffn/b2"])
    out = x1 + h2
    return out, (ln1c, attc, ln2c, f, gc, ga)


def _encoder_block_bwd(dout, cache, p, prefix, n_heads, grads):
    ln1c, attc, ln2c, f, gc, ga = cache
    dga, dw2, db2 = linear_bwd(dout, ga, p[prefix + "ffn/W2"])
    grads[prefix + "ffn/W2"] += dw2
    grads[prefix + "ffn/b2"] += db2
    dh1 = gelu_bwd(dga, gc)
    df, dw1, db1 = linear_bwd(dh1, f, p[prefix + "ffn/W1"])
    grads[prefix + "ffn/W1"] += dw1
    grads[prefix + "ffn/b1"] += db1
    dx1, dg2, dbb2 = layernorm_bwd(df, ln2c)
    grads[prefix + "ln2/g"] += dg2
    grads[prefix + "ln2/b"] += dbb2
    dx1 = dx1 + dout
    dq, dkv = attention_bwd(dx1, attc, p, prefix + "attn/", n_heads, grads)
    da = dq + dkv
    dx, dg1, dbb1 = layernorm_bwd(da, ln1c)
    grads[prefix + "ln1/g"] += dg1
    grads[prefix + "ln1/b"] += dbb1
    return dx + dx1


def _cross_side_fwd(xq, xkv, kv_mask, p, prefix, n_heads):
    a, lnqc = layernorm_fwd(xq, p[prefix + "ln_q/g"], p[prefix + "ln_q/b"])
    kv, lnkvc = layernorm_fwd(xkv, p[prefix + "ln_kv/g"], p[prefix + "ln_kv/b"])
    attn, attc = attention_fwd(a, kv, kv_mask, p, prefix + "attn/", n_heads)
    x1 = xq + attn
    f, ln2c = layernorm_fwd(x1, p[prefix + "ln2/g"], p[prefix + "ln2/b"])
    h1, _ = linear_fwd(f, p[prefix + "ffn/W1"], p[prefix + "ffn/b1"])
    ga, gc = gelu_fwd(h1)
    h2, _ = linear_fwd(ga, p[prefix + "ffn/W2"], p[prefix + "ffn/b2"])
    out = x1 + h2
    return out, (lnqc, lnkvc, attc, ln2c, f, gc, ga)


def _cross_side_bwd(dout, cache, p, prefix, n_heads, grads):
    lnqc, lnkvc, attc, ln2c, f, gc, ga = cache
    dga, dw2, db2 = linear_bwd(dout, ga, p[prefix + "ffn/W2"])
    grads[prefix + "ffn/W2"] += dw2
    grads[prefix + "ffn/b2"] += db2
    dh1 = gelu_bwd(dga, gc)
    df, dw1, db1 = linear_bwd(dh1, f, p[prefix + "ffn/W1"])
    grads[prefix + "ffn/W1"] += dw1
    grads[prefix + "ffn/b1"] += db1
    dx1, dg2, dbb2 = layernorm_bwd(df, ln2c)
    grads[prefix + "ln2/g"] += dg2
    grads[prefix + "ln2/b"] += dbb2
    dx1 = dx1 + dout
    dq, dkv = attention_bwd(dx1, attc, p, prefix + "attn/", n_heads, grads)
    dxq, dgq, dbq = layernorm_bwd(dq, lnqc)
    grads[prefix + "ln_q/g"] += dgq
    grads[prefix + "ln_q/b"] += dbq
    dxkv, dgkv, dbkv = layernorm_bwd(dkv, lnkvc)
    grads[prefix + "ln_kv/g"] += dgkv
    grads[prefix + "ln_kv/b"] += dbkv
    return dxq + dx1, dxkv


def forward(params: dict, batch: dict, config: ModelConfig):
    """Run the network; returns (logits, cache) with logits (B, H, W[, K])."""
    for key in ("pose", "lm"):
        if not np.all(np.isfinite(batch[key])):
            raise NumericError(f"non-finite values in {key} features")
    nh = config.n_heads
    cache = {"batch": batch}

    hp = hl = None
    if config.uses_poses:
        hp, _ = linear_fwd(batch["pose"], params["pose_embed/W"], params["pose_embed/b"])
        pose_blocks = []
        for i in range(config.n_self_layers):
            hp, c = _encoder_block_fwd(hp, batch["pose_mask"], params, f"pose_enc{i}/", nh)
            pose_blocks.append(c)
        cache["pose_blocks"] = pose_blocks
    if config.uses_landmarks:
        hl, _ = linear_fwd(batch["lm"], params["lm_embed/W"], params["lm_embed/b"])
        lm_blocks = []
        for i in range(config.n_self_layers):
            hl, c = _encoder_block_fwd(hl, batch["lm_mask"], params, f"lm_enc{i}/", nh)
            lm_blocks.append(c)
        cache["lm_blocks"] = lm_blocks

    if config.input_mode == "full":
        cross_caches = []
        for i in range(config.n_cross_layers):
            hp_new, cp = _cross_side_fwd(hp, hl, batch["lm_mask"], params, f"cross{i}/p/", nh)
            hl_new, cl = _cross_side_fwd(hl, hp, batch["pose_mask"], params, f"cross{i}/l/", nh)
            cross_caches.append((cp, cl))
            hp, hl = hp_new, hl_new
        cache["cross"] = cross_caches

    pooled_parts = []
    if config.uses_poses:
        pooled_p, pmc = masked_mean_fwd(hp, batch["pose_mask"])
        cache["pool_p"] = pmc
        pooled_parts.append(pooled_p)
    if config.uses_landmarks:
        pooled_l, lmc = masked_mean_fwd(hl, batch["lm_mask"])
        cache["pool_l"] = lmc
        pooled_parts.append(pooled_l)
    pooled = np.concatenate(pooled_parts, axis=1)
    cache["pooled"] = pooled

    h1, _ = linear_fwd(pooled, params["head/W1"], params["head/b1"])
    ga, gc = gelu_fwd(h1)
    out, _ = linear_fwd(ga, params["head/W2"], params["head/b2"])
    cache["head"] = (gc, ga)

    b = out.shape[0]
    h, w = config.grid.shape
    if config.n_classes == 2:
        logits = out.reshape(b, h, w)
    else:
        logits = out.reshape(b, h, w, config.n_classes)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    return logits, cache


def backward(params: dict, cache: dict, dlogits: np.ndarray, config: ModelConfig) -> dict:
    """Gradients of a scalar loss given d(loss)/d(logits)."""
    grads = {name: np.zeros(shape) for name, shape in param_spec(config)}
    batch = cache["batch"]
    nh = config.n_heads
    b = dlogits.shape[0]
    dout = dlogits.reshape(b, -1)

    gc, ga = cache["head"]
    dga, dw2, db2 = linear_bwd(dout, ga, params["head/W2"])
    grads["head/W2"] += dw2
    grads["head/b2"] += db2
    dh1 = gelu_bwd(dga, gc)
    dpooled, dw1, db1 = linear_bwd(dh1, cache["pooled"], params["head/W1"])
    grads["head/W1"] += dw1
    grads["head/b1"] += db1

    d = config.d_model
    dhp = dhl = None
    offset = 0
    if config.uses_poses:
        dhp = masked_mean_bwd(dpooled[:, offset : offset + d], cache["pool_p"])
        offset += d
    if config.uses_landmarks:
        dhl = masked_mean_bwd(dpooled[:, offset : offset + d], cache["pool_l"])

    if config.input_mode == "full":
        for i in reversed(range(config.n_cross_layers)):
            cp, cl = cache["cross"][i]
            dhp_q, dhl_kv = _cross_side_bwd(dhp, cp, params, f"cross{i}/p/", nh, grads)
            dhl_q, dhp_kv = _cross_side_bwd(dhl, cl, params, f"cross{i}/l/", nh, grads)
            dhp = dhp_q + dhp_kv
            dhl = dhl_q + dhl_kv

    if config.uses_poses:
        for i in reversed(range(config.n_self_layers)):
            dhp = _encoder_block_bwd(
                dhp, cache["pose_blocks"][i], params, f"pose_enc{i}/", nh, grads
            )
        _, dwe, dbe = linear_bwd(dhp, batch["pose"], params["pose_embed/W"])
        grads["pose_embed/W"] += dwe
        grads["pose_embed/b"] += dbe
    if config.uses_landmarks:
        for i in reversed(range(config.n_self_layers)):
            dhl = _encoder_block_bwd(
                dhl, cache["lm_blocks"][i], params, f"lm_enc{i}/", nh, grads
            )
        _, dwe, dbe = linear_bwd(dhl, batch["lm"], params["lm_embed/W"])
        grads["lm_embed/W"] += dwe
        grads["lm_embed/b"] += dbe
    return grads


def loss_from_logits(
    logits: np.ndarray,
    labels: np.ndarray,
    n_classes: int = 2,
    class_weights: Optional[np.ndarray] = None,
):
    """Mean per-cell cross-entropy and its gradient w.r.t. the logits.

    Binary uses the numerically stable logits formulation; multi-class uses
    softmax cross-entropy. ``class_weights`` reweights cells by their label;
    the loss stays a weighted mean so duplicated samples do not change it.
    """
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    if class_weights is None:
        class_weights = np.ones(n_classes)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    w = class_weights[labels]
    wsum = w.sum()

    if n_classes == 2:
        z = logits
        y = labels.astype(np.float64)
        ce = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
        loss = float((w * ce).sum() / wsum)
        sig = 1.0 / (1.0 + np.exp(-z))
        dlogits = w * (sig - y) / wsum
        return loss, dlogits

    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    e = np.exp(shifted)
    esum = e.sum(axis=-1, keepdims=True)
    lse = np.log(esum[..., 0])
    picked = np.take_along_axis(shifted, labels[..., None], axis=-1)[..., 0]
    ce = lse - picked
    loss = float((w * ce).sum() / wsum)
    p = e / esum
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    dlogits = (p - onehot) * (w / wsum)[..., None]
    return loss, dlogits
