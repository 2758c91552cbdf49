"""Numpy layer primitives with hand-written backward passes.

Every *_fwd returns (output, cache); the matching *_bwd consumes the
upstream gradient plus that cache. All arithmetic stays in the dtype of the
incoming arrays (python scalars only, so float32 models never silently
promote to float64).
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

LN_EPS = 1e-5

# Large negative additive mask value. exp() underflows to exactly 0 after
# the max-subtraction in softmax, yet a fully-masked row degrades to a
# uniform distribution instead of NaN.
MASK_VALUE = -1e30


def linear_fwd(x, w, b=None):
    y = x @ w
    if b is not None:
        y = y + b
    return y, (x, w, b is not None)


def linear_bwd(dy, cache):
    x, w, has_bias = cache
    dx = dy @ w.T
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dw = x2.T @ dy2
    db = dy2.sum(axis=0) if has_bias else None
    return dx, dw, db


def layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def layernorm_bwd(dy, cache):
    xhat, inv, g = cache
    lead = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=lead)
    db = dy.sum(axis=lead)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def relu_fwd(x):
    return np.maximum(x, 0.0), (x > 0.0)


def relu_bwd(dy, cache):
    return dy * cache


def softmax(scores):
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_bwd(dp, p):
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def dropout_fwd(x, rate, rng):
    """Inverted dropout: scaling happens at train time, eval is identity."""
    if rate <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    keep *= 1.0 / (1.0 - rate)
    return x * keep, keep


def dropout_bwd(dy, keep):
    if keep is None:
        return dy
    return dy * keep


def _split_heads(x, num_heads):
    batch, length, d_model = x.shape
    return x.reshape(batch, length, num_heads, d_model // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(xh):
    batch, num_heads, length, head_dim = xh.shape
    return xh.transpose(0, 2, 1, 3).reshape(batch, length, num_heads * head_dim)


def attention_fwd(xq, xkv, weights, mask, num_heads, drop_rate=0.0, rng=None):
    """Multi-head scaled dot-product attention.

    ``weights`` is the dict {"wq","bq","wk","wv","bv","wo","bo"} (the key
    projection is bias-free: softmax is shift-invariant along keys, so a key
    bias would be a dead parameter). ``mask`` is additive and broadcastable
    to (B, heads, Lq, Lk). The same routine serves self- and cross-attention
    (xq is the query stream, xkv feeds keys and values). Q/K/V projections
    run as one fused matmul when the streams coincide.
    """
    d_model = xq.shape[-1]
    head_dim = d_model // num_heads
    fused = xq is xkv
    if fused:
        w_in = np.concatenate([weights["wq"], weights["wk"], weights["wv"]], axis=1)
        qkv = xq @ w_in
        q = qkv[..., :d_model] + weights["bq"]
        k = qkv[..., d_model : 2 * d_model]
        v = qkv[..., 2 * d_model :] + weights["bv"]
    else:
        w_in = np.concatenate([weights["wk"], weights["wv"]], axis=1)
        q = xq @ weights["wq"] + weights["bq"]
        kv = xkv @ w_in
        k = kv[..., :d_model]
        v = kv[..., d_model:] + weights["bv"]

    qh = _split_heads(q, num_heads)
    kh = _split_heads(k, num_heads)
    vh = _split_heads(v, num_heads)

    scale = 1.0 / math.sqrt(head_dim)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    if mask is not None:
        scores = scores + mask
    probs = softmax(scores)
    dropped, keep = dropout_fwd(probs, drop_rate, rng) if rng is not None else (probs, None)
    zh = dropped @ vh
    z = _merge_heads(zh)
    out, cache_o = linear_fwd(z, weights["wo"], weights["bo"])

    cache = (xq, xkv, w_in, fused, weights["wq"], qh, kh, vh, probs, dropped, keep, cache_o, scale)
    return out, cache


def attention_bwd(dout, cache, num_heads):
    """Returns (dxq, dxkv, weight_grads) mirroring attention_fwd's inputs."""
    xq, xkv, w_in, fused, wq, qh, kh, vh, probs, dropped, keep, cache_o, scale = cache
    d_model = xq.shape[-1]

    dz, dwo, dbo = linear_bwd(dout, cache_o)
    dzh = _split_heads(dz, num_heads)

    ddropped = dzh @ vh.transpose(0, 1, 3, 2)
    dvh = dropped.transpose(0, 1, 3, 2) @ dzh
    dprobs = dropout_bwd(ddropped, keep)
    dscores = softmax_bwd(dprobs, probs) * scale

    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    dq = _merge_heads(dqh)
    dk = _merge_heads(dkh)
    dv = _merge_heads(dvh)

    dbq = dq.reshape(-1, d_model).sum(axis=0)
    dbv = dv.reshape(-1, d_model).sum(axis=0)
    if fused:
        dqkv = np.concatenate([dq, dk, dv], axis=-1)
        dxq_fused = dqkv @ w_in.T
        dw_in = xq.reshape(-1, d_model).T @ dqkv.reshape(-1, 3 * d_model)
        grads = {
            "wq": dw_in[:, :d_model],
            "bq": dbq,
            "wk": dw_in[:, d_model : 2 * d_model],
            "wv": dw_in[:, 2 * d_model :],
            "bv": dbv,
            "wo": dwo,
            "bo": dbo,
        }
        # query and key/value streams coincide; the combined input gradient
        # rides in the first slot and the second contributes nothing
        return dxq_fused, 0.0, grads
    dkv = np.concatenate([dk, dv], axis=-1)
    dxq = dq @ wq.T
    dwq = xq.reshape(-1, d_model).T @ dq.reshape(-1, d_model)
    dxkv = dkv @ w_in.T
    dw_in = xkv.reshape(-1, d_model).T @ dkv.reshape(-1, 2 * d_model)
    grads = {
        "wq": dwq,
        "bq": dbq,
        "wk": dw_in[:, :d_model],
        "wv": dw_in[:, d_model:],
        "bv": dbv,
        "wo": dwo,
        "bo": dbo,
    }
    return dxq, dxkv, grads


@lru_cache(maxsize=8)
def _sinusoidal_cached(length, d_model, dtype_name):
    positions = np.arange(length, dtype=np.float64)[:, None]
    dims = np.arange(0, d_model, 2, dtype=np.float64)
    angles = positions * np.exp(dims * (-np.log(10000.0) / d_model))
    pe = np.zeros((length, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d_model // 2])
    pe = pe.astype(dtype_name)
    pe.setflags(write=False)
    return pe


def sinusoidal_encoding(length, d_model, dtype=np.float64):
    """Non-learned positional encoding from the original Transformer."""
    return _sinusoidal_cached(length, d_model, np.dtype(dtype).name)
