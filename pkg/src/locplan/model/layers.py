"""Primitive layers with explicit forward/backward passes (float64, NumPy).

Every ``*_fwd`` returns (output, cache); the matching ``*_bwd`` consumes the
upstream gradient and the cache and returns input/parameter gradients. All
backward passes are verified against central finite differences in the test
suite.
"""

from __future__ import annotations

import math

import numpy as np

_LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def linear_fwd(x, w, b):
    return x @ w + b, x


def linear_bwd(dy, x, w):
    dx = dy @ w.T
    dw = np.tensordot(x, dy, axes=(tuple(range(x.ndim - 1)),) * 2)
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    return dx, dw, db


def layernorm_fwd(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv_std
    return gain * xhat + bias, (xhat, inv_std, gain)


def layernorm_bwd(dy, cache):
    xhat, inv_std, gain = cache
    d = xhat.shape[-1]
    dxhat = dy * gain
    dx = (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    ) * inv_std
    dgain = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    dbias = dy.sum(axis=tuple(range(dy.ndim - 1)))
    return dx, dgain, dbias


def gelu_fwd(x):
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_bwd(dy, cache):
    x, t = cache
    dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def masked_softmax_fwd(scores, key_mask):
    """Softmax over the last axis with masked-out keys.

    ``key_mask`` broadcasts against ``scores``; masked entries get zero
    weight. Rows with no valid key produce all-zero weights instead of NaN.
    """
    neg = np.where(key_mask, scores, -np.inf)
    rowmax = neg.max(axis=-1, keepdims=True)
    rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)
    e = np.exp(neg - rowmax)
    denom = np.maximum(e.sum(axis=-1, keepdims=True), 1e-300)
    p = e / denom
    return p, (p, key_mask)


def masked_softmax_bwd(dp, cache):
    p, key_mask = cache
    ds = p * (dp - (p * dp).sum(axis=-1, keepdims=True))
    return np.where(key_mask, ds, 0.0)


def _split_heads(x, n_heads):
    b, s, d = x.shape
    return x.reshape(b, s, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, s, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * dk)


def attention_fwd(q_in, kv_in, kv_mask, p, prefix, n_heads):
    """Multi-head scaled dot-product attention of q_in over kv_in.

    ``kv_mask`` is (B, Sk) bool; masked keys receive zero weight. Parameters
    live in ``p`` under ``prefix`` as Wq/bq, Wk/bk, Wv/bv, Wo/bo.
    """
    q_lin, _ = linear_fwd(q_in, p[prefix + "Wq"], p[prefix + "bq"])
    k_lin, _ = linear_fwd(kv_in, p[prefix + "Wk"], p[prefix + "bk"])
    v_lin, _ = linear_fwd(kv_in, p[prefix + "Wv"], p[prefix + "bv"])
    q = _split_heads(q_lin, n_heads)
    k = _split_heads(k_lin, n_heads)
    v = _split_heads(v_lin, n_heads)
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    weights, sm_cache = masked_softmax_fwd(scores, kv_mask[:, None, None, :])
    ctx = weights @ v
    merged = _merge_heads(ctx)
    out, _ = linear_fwd(merged, p[prefix + "Wo"], p[prefix + "bo"])
    cache = (q_in, kv_in, q, k, v, weights, sm_cache, merged, scale)
    return out, cache


def attention_bwd(dout, cache, p, prefix, n_heads, grads):
    q_in, kv_in, q, k, v, weights, sm_cache, merged, scale = cache
    dmerged, dwo, dbo = linear_bwd(dout, merged, p[prefix + "Wo"])
    grads[prefix + "Wo"] += dwo
    grads[prefix + "bo"] += dbo
    dctx = _split_heads(dmerged, n_heads)
    dweights = dctx @ v.transpose(0, 1, 3, 2)
    dv = weights.transpose(0, 1, 3, 2) @ dctx
    dscores = masked_softmax_bwd(dweights, sm_cache) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q
    dq_in, dwq, dbq = linear_bwd(_merge_heads(dq), q_in, p[prefix + "Wq"])
    dk_in, dwk, dbk = linear_bwd(_merge_heads(dk), kv_in, p[prefix + "Wk"])
    dv_in, dwv, dbv = linear_bwd(_merge_heads(dv), kv_in, p[prefix + "Wv"])
    grads[prefix + "Wq"] += dwq
    grads[prefix + "bq"] += dbq
    grads[prefix + "Wk"] += dwk
    grads[prefix + "bk"] += dbk
    grads[prefix + "Wv"] += dwv
    grads[prefix + "bv"] += dbv
    return dq_in, dk_in + dv_in


def masked_mean_fwd(x, mask):
    """Mean over valid rows; returns zeros when the mask is empty."""
    m = mask.astype(np.float64)[:, :, None]
    count = np.maximum(m.sum(axis=1), 1.0)
    return (x * m).sum(axis=1) / count, (m, count)


def masked_mean_bwd(dy, cache):
    m, count = cache
    return m * (dy / count)[:, None, :]
