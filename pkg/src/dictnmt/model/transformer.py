"""Encoder-decoder transformer with manual backpropagation.

Pre-norm residual blocks, sinusoidal positions, and one embedding table
shared by the encoder input, decoder input, and (when tied) the output
projection. Parameters live in a flat name -> float64 array dict so the
optimizer and the finite-difference checker can treat them uniformly.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ConfigurationError, DictNmtError
from .config import TransformerConfig
from .layers import (
    MASK_VALUE,
    attention_bwd,
    attention_fwd,
    dropout_bwd,
    dropout_fwd,
    layernorm_bwd,
    layernorm_fwd,
    linear_bwd,
    linear_fwd,
    relu_bwd,
    relu_fwd,
    sinusoidal_encoding,
    softmax,
)

CHECKPOINT_MAGIC = b"DNMTCKPT"

_ATTN_KEYS = ("wq", "bq", "wk", "wv", "bv", "wo", "bo")


class SequenceTooLongError(DictNmtError):
    """An input sequence exceeds the configured maximum length."""


@dataclass
class ModelParams:
    """A transformer's configuration plus all weight tensors."""

    config: TransformerConfig
    tensors: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _init_attention(rng, tensors, prefix, d):
    for name in ("wq", "wk", "wv", "wo"):
        tensors[f"{prefix}.{name}"] = _glorot(rng, d, d)
    for name in ("bq", "bv", "bo"):
        tensors[f"{prefix}.{name}"] = np.zeros(d)


def _init_layernorm(tensors, prefix, d):
    tensors[f"{prefix}.g"] = np.ones(d)
    tensors[f"{prefix}.b"] = np.zeros(d)


def _init_ffn(rng, tensors, prefix, d, d_ff):
    tensors[f"{prefix}.w1"] = _glorot(rng, d, d_ff)
    tensors[f"{prefix}.b1"] = np.zeros(d_ff)
    tensors[f"{prefix}.w2"] = _glorot(rng, d_ff, d)
    tensors[f"{prefix}.b2"] = np.zeros(d)


def init_model(cfg: TransformerConfig, seed: int) -> ModelParams:
    """Deterministically initialize all weights from a seed.

    Weights are drawn in float64 and cast to the configured dtype, so a
    float32 and float64 model share the same (rounded) starting point.
    """
    rng = np.random.default_rng(seed)
    d, d_ff = cfg.d_model, cfg.d_ff
    tensors: dict[str, np.ndarray] = {}
    tensors["embedding"] = rng.normal(0.0, d**-0.5, size=(cfg.vocab_size, d))
    for i in range(cfg.num_layers):
        _init_layernorm(tensors, f"enc{i}.ln1", d)
        _init_attention(rng, tensors, f"enc{i}.attn", d)
        _init_layernorm(tensors, f"enc{i}.ln2", d)
        _init_ffn(rng, tensors, f"enc{i}.ffn", d, d_ff)
    _init_layernorm(tensors, "enc.ln", d)
    for i in range(cfg.num_layers):
        _init_layernorm(tensors, f"dec{i}.ln1", d)
        _init_attention(rng, tensors, f"dec{i}.self", d)
        _init_layernorm(tensors, f"dec{i}.ln2", d)
        _init_attention(rng, tensors, f"dec{i}.cross", d)
        _init_layernorm(tensors, f"dec{i}.ln3", d)
        _init_ffn(rng, tensors, f"dec{i}.ffn", d, d_ff)
    _init_layernorm(tensors, "dec.ln", d)
    if not cfg.tie_embeddings:
        tensors["out.w"] = _glorot(rng, d, cfg.vocab_size)
    tensors = {k: v.astype(cfg.np_dtype) for k, v in tensors.items()}
    return ModelParams(config=cfg, tensors=tensors)


def _as_batch(ids) -> tuple[np.ndarray, bool]:
    arr = np.asarray(ids, dtype=np.int64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"ids must be 1- or 2-dimensional, got shape {arr.shape}")


def _attn_weights(tensors, prefix):
    return {k: tensors[f"{prefix}.{k}"] for k in _ATTN_KEYS}


def _embed_fwd(tensors, cfg, ids, drop_rate, rng):
    emb = tensors["embedding"]
    pe = sinusoidal_encoding(ids.shape[1], cfg.d_model, cfg.np_dtype)
    x = emb[ids] * math.sqrt(cfg.d_model) + pe
    x, keep = dropout_fwd(x, drop_rate, rng) if rng is not None else (x, None)
    return x, (ids, keep)


def _embed_bwd(dx, cache, cfg, grads):
    ids, keep = cache
    dx = dropout_bwd(dx, keep) * math.sqrt(cfg.d_model)
    np.add.at(grads["embedding"], ids.reshape(-1), dx.reshape(-1, cfg.d_model))


def _block_fwd(x, tensors, prefix, sublayer, drop_rate, rng):
    """Pre-norm residual block: x + dropout(sublayer(layernorm(x)))."""
    h, ln_cache = layernorm_fwd(x, tensors[f"{prefix}.g"], tensors[f"{prefix}.b"])
    out, sub_cache = sublayer(h)
    out, keep = dropout_fwd(out, drop_rate, rng) if rng is not None else (out, None)
    return x + out, (ln_cache, sub_cache, keep)


def _ffn_fwd(h, tensors, prefix):
    h1, c1 = linear_fwd(h, tensors[f"{prefix}.w1"], tensors[f"{prefix}.b1"])
    a, c_relu = relu_fwd(h1)
    h2, c2 = linear_fwd(a, tensors[f"{prefix}.w2"], tensors[f"{prefix}.b2"])
    return h2, (c1, c_relu, c2)


def _ffn_bwd(dy, cache, grads, prefix):
    c1, c_relu, c2 = cache
    da, dw2, db2 = linear_bwd(dy, c2)
    dh1 = relu_bwd(da, c_relu)
    dh, dw1, db1 = linear_bwd(dh1, c1)
    grads[f"{prefix}.w1"] += dw1
    grads[f"{prefix}.b1"] += db1
    grads[f"{prefix}.w2"] += dw2
    grads[f"{prefix}.b2"] += db2
    return dh


def _padding_mask(ids, pad_id, dtype):
    """Additive mask silencing PAD keys, shape (B, 1, 1, L)."""
    return np.where(ids == pad_id, dtype.type(MASK_VALUE), dtype.type(0.0))[:, None, None, :]


def _causal_mask(length, dtype):
    """Additive mask silencing future keys, shape (1, 1, L, L)."""
    mask = np.triu(np.full((length, length), MASK_VALUE, dtype=dtype), k=1)
    return mask[None, None, :, :]


def forward(params: ModelParams, src_ids, tgt_ids, train_mode: bool = False, rng=None):
    """Teacher-forced forward pass; returns logits over target positions.

    Accepts a single pair (1-D id lists) or a padded batch (2-D arrays).
    Dropout fires only in train mode, driven by the explicit rng.
    """
    logits, _ = _forward_cached(params, src_ids, tgt_ids, train_mode, rng)
    return logits


def _forward_cached(params: ModelParams, src_ids, tgt_ids, train_mode, rng):
    cfg = params.config
    tensors = params.tensors
    src, squeeze = _as_batch(src_ids)
    tgt, _ = _as_batch(tgt_ids)
    if src.shape[1] > cfg.max_seq_len or tgt.shape[1] > cfg.max_seq_len:
        raise SequenceTooLongError(
            f"sequence length {max(src.shape[1], tgt.shape[1])} exceeds "
            f"max_seq_len {cfg.max_seq_len}"
        )
    if train_mode and cfg.dropout > 0.0 and rng is None:
        raise ValueError("train_mode with dropout requires an explicit rng")
    drop = cfg.dropout if train_mode else 0.0
    rng = rng if train_mode else None

    src_mask = _padding_mask(src, cfg.pad_id, cfg.np_dtype)
    tgt_mask = _padding_mask(tgt, cfg.pad_id, cfg.np_dtype) + _causal_mask(tgt.shape[1], cfg.np_dtype)

    x, c_src_embed = _embed_fwd(tensors, cfg, src, drop, rng)
    enc_caches = []
    for i in range(cfg.num_layers):
        x, c_attn = _block_fwd(
            x, tensors, f"enc{i}.ln1",
            lambda h: attention_fwd(h, h, _attn_weights(tensors, f"enc{i}.attn"),
                                    src_mask, cfg.num_heads, drop, rng),
            drop, rng,
        )
        x, c_ffn = _block_fwd(
            x, tensors, f"enc{i}.ln2",
            lambda h: _ffn_fwd(h, tensors, f"enc{i}.ffn"),
            drop, rng,
        )
        enc_caches.append((c_attn, c_ffn))
    memory, c_enc_ln = layernorm_fwd(x, tensors["enc.ln.g"], tensors["enc.ln.b"])

    y, c_tgt_embed = _embed_fwd(tensors, cfg, tgt, drop, rng)
    dec_caches = []
    for i in range(cfg.num_layers):
        y, c_self = _block_fwd(
            y, tensors, f"dec{i}.ln1",
            lambda h: attention_fwd(h, h, _attn_weights(tensors, f"dec{i}.self"),
                                    tgt_mask, cfg.num_heads, drop, rng),
            drop, rng,
        )
        y, c_cross = _block_fwd(
            y, tensors, f"dec{i}.ln2",
            lambda h: attention_fwd(h, memory, _attn_weights(tensors, f"dec{i}.cross"),
                                    src_mask, cfg.num_heads, drop, rng),
            drop, rng,
        )
        y, c_ffn = _block_fwd(
            y, tensors, f"dec{i}.ln3",
            lambda h: _ffn_fwd(h, tensors, f"dec{i}.ffn"),
            drop, rng,
        )
        dec_caches.append((c_self, c_cross, c_ffn))
    h, c_dec_ln = layernorm_fwd(y, tensors["dec.ln.g"], tensors["dec.ln.b"])

    if cfg.tie_embeddings:
        logits = h @ tensors["embedding"].T
    else:
        logits = h @ tensors["out.w"]

    cache = (c_src_embed, enc_caches, c_enc_ln, c_tgt_embed, dec_caches, c_dec_ln, h)
    if squeeze:
        return logits[0], cache
    return logits, cache


def _block_bwd(dout, block_cache, tensors, prefix, sub_bwd):
    """Backward of the pre-norm residual block; sub_bwd maps d(sub_out) -> d(h)."""
    ln_cache, sub_cache, keep = block_cache
    dsub = dropout_bwd(dout, keep)
    dh = sub_bwd(dsub, sub_cache)
    dx_ln, dg, db = layernorm_bwd(dh, ln_cache)
    tensors_g, tensors_b = f"{prefix}.g", f"{prefix}.b"
    return dout + dx_ln, {tensors_g: dg, tensors_b: db}


def _backward(params: ModelParams, cache, dlogits):
    """Gradients of a scalar loss w.r.t. every tensor, given dL/dlogits."""
    cfg = params.config
    tensors = params.tensors
    c_src_embed, enc_caches, c_enc_ln, c_tgt_embed, dec_caches, c_dec_ln, h = cache
    if dlogits.ndim == 2:
        dlogits = dlogits[None]

    grads = {name: np.zeros_like(t) for name, t in tensors.items()}

    if cfg.tie_embeddings:
        emb = tensors["embedding"]
        dh = dlogits @ emb
        d2 = dlogits.reshape(-1, cfg.vocab_size)
        h2 = h.reshape(-1, cfg.d_model)
        grads["embedding"] += d2.T @ h2
    else:
        dh = dlogits @ tensors["out.w"].T
        grads["out.w"] += h.reshape(-1, cfg.d_model).T @ dlogits.reshape(-1, cfg.vocab_size)

    dy, dg, db = layernorm_bwd(dh, c_dec_ln)
    grads["dec.ln.g"] += dg
    grads["dec.ln.b"] += db

    dmemory_total = None
    for i in reversed(range(cfg.num_layers)):
        c_self, c_cross, c_ffn = dec_caches[i]

        dy, g = _block_bwd(
            dy, c_ffn, tensors, f"dec{i}.ln3",
            lambda dsub, sc: _ffn_bwd(dsub, sc, grads, f"dec{i}.ffn"),
        )
        for k, v in g.items():
            grads[k] += v

        dmem_here = {}

        def cross_bwd(dsub, sc):
            dxq, dxkv, wgrads = attention_bwd(dsub, sc, cfg.num_heads)
            for k, v in wgrads.items():
                grads[f"dec{i}.cross.{k}"] += v
            dmem_here["d"] = dxkv
            return dxq

        dy, g = _block_bwd(dy, c_cross, tensors, f"dec{i}.ln2", cross_bwd)
        for k, v in g.items():
            grads[k] += v
        dmemory_total = dmem_here["d"] if dmemory_total is None else dmemory_total + dmem_here["d"]

        def self_bwd(dsub, sc):
            dxq, dxkv, wgrads = attention_bwd(dsub, sc, cfg.num_heads)
            for k, v in wgrads.items():
                grads[f"dec{i}.self.{k}"] += v
            return dxq + dxkv

        dy, g = _block_bwd(dy, c_self, tensors, f"dec{i}.ln1", self_bwd)
        for k, v in g.items():
            grads[k] += v

    _embed_bwd(dy, c_tgt_embed, cfg, grads)

    dx, dg, db = layernorm_bwd(dmemory_total, c_enc_ln)
    grads["enc.ln.g"] += dg
    grads["enc.ln.b"] += db

    for i in reversed(range(cfg.num_layers)):
        c_attn, c_ffn = enc_caches[i]

        dx, g = _block_bwd(
            dx, c_ffn, tensors, f"enc{i}.ln2",
            lambda dsub, sc: _ffn_bwd(dsub, sc, grads, f"enc{i}.ffn"),
        )
        for k, v in g.items():
            grads[k] += v

        def enc_self_bwd(dsub, sc):
            dxq, dxkv, wgrads = attention_bwd(dsub, sc, cfg.num_heads)
            for k, v in wgrads.items():
                grads[f"enc{i}.attn.{k}"] += v
            return dxq + dxkv

        dx, g = _block_bwd(dx, c_attn, tensors, f"enc{i}.ln1", enc_self_bwd)
        for k, v in g.items():
            grads[k] += v

    _embed_bwd(dx, c_src_embed, cfg, grads)
    return grads


def loss(logits, target_ids, pad_id: int) -> float:
    """Mean cross-entropy (nats) per non-PAD target token."""
    value, _ = _loss_and_dlogits(np.asarray(logits), np.asarray(target_ids), pad_id)
    return value


def _loss_and_dlogits(logits, target_ids, pad_id):
    if logits.ndim == 2:
        logits = logits[None]
    targets, _ = _as_batch(target_ids)
    mask = targets != pad_id
    n_tokens = int(mask.sum())
    if n_tokens == 0:
        raise ValueError("loss is undefined for an all-PAD target")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_z
    b_idx, t_idx = np.nonzero(mask)
    nll = -log_probs[b_idx, t_idx, targets[b_idx, t_idx]]
    value = float(nll.sum() / n_tokens)

    probs = np.exp(log_probs)
    dlogits = probs * mask[..., None]
    dlogits[b_idx, t_idx, targets[b_idx, t_idx]] -= 1.0
    dlogits /= n_tokens
    return value, dlogits


def loss_and_grads(params: ModelParams, src_ids, tgt_in, tgt_out, train_mode=False, rng=None):
    """One teacher-forced pass: scalar loss plus gradients for every tensor."""
    logits, cache = _forward_cached(params, src_ids, tgt_in, train_mode, rng)
    if logits.ndim == 2:
        logits = logits[None]
    value, dlogits = _loss_and_dlogits(logits, tgt_out, params.config.pad_id)
    grads = _backward(params, cache, dlogits)
    return value, grads


def save_checkpoint(params: ModelParams, path, seed: int | None = None, epoch: int | None = None) -> None:
    """Write a deterministic binary checkpoint.

    Layout: magic, little-endian uint64 header length, JSON header (config,
    seed, epoch, tensor names and shapes), then raw little-endian float64
    tensor data in header order. Identical params produce identical bytes.
    """
    names = sorted(params.tensors)
    header = {
        "config": asdict(params.config),
        "seed": seed,
        "epoch": epoch,
        "tensors": [[name, list(params.tensors[name].shape)] for name in names],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<Q", len(header_bytes)))
    buf.write(header_bytes)
    for name in names:
        buf.write(np.ascontiguousarray(params.tensors[name], dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Reload a checkpoint; eval-mode logits reproduce bitwise."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ConfigurationError(f"{path} is not a model checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    (header_len,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    cfg = TransformerConfig(**header["config"])
    tensors = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[name] = arr.astype(cfg.np_dtype, copy=True)
        offset += count * 8
    return ModelParams(config=cfg, tensors=tensors), {
        "seed": header["seed"],
        "epoch": header["epoch"],
    }
