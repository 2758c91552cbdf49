"""Finite-difference verification of the hand-written backward pass."""

from __future__ import annotations

import numpy as np

from .transformer import ModelParams, loss_and_grads, _forward_cached, _loss_and_dlogits


def _loss_only(params: ModelParams, src, tgt_in, tgt_out) -> float:
    logits, _ = _forward_cached(params, src, tgt_in, False, None)
    if logits.ndim == 2:
        logits = logits[None]
    value, _ = _loss_and_dlogits(logits, tgt_out, params.config.pad_id)
    return value


def grad_check(
    params: ModelParams,
    batch,
    epsilon: float = 1e-5,
    num_coords: int = 200,
    rng: np.random.Generator | None = None,
    grad_transform=None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``batch`` is (src_ids, tgt_ids); teacher forcing is applied internally.
    At least one coordinate of every tensor is sampled, with the rest of the
    ``num_coords`` budget spread proportionally to tensor size, so a defect
    anywhere in the backward pass is visible. ``grad_transform`` lets tests
    corrupt the analytic gradients to confirm the harness notices.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    src_ids, tgt_ids = batch
    src = np.asarray(src_ids, dtype=np.int64)
    tgt = np.asarray(tgt_ids, dtype=np.int64)
    if src.ndim == 1:
        src = src[None]
    if tgt.ndim == 1:
        tgt = tgt[None]
    tgt_in, tgt_out = tgt[:, :-1], tgt[:, 1:]

    _, analytic = loss_and_grads(params, src, tgt_in, tgt_out, train_mode=False)
    if grad_transform is not None:
        analytic = grad_transform(analytic)

    names = sorted(params.tensors)
    total_size = sum(params.tensors[n].size for n in names)
    max_rel_error = 0.0
    for name in names:
        tensor = params.tensors[name]
        quota = max(1, round(num_coords * tensor.size / total_size))
        flat_indices = rng.choice(tensor.size, size=min(quota, tensor.size), replace=False)
        for flat in flat_indices:
            idx = np.unravel_index(int(flat), tensor.shape)
            original = tensor[idx]
            tensor[idx] = original + epsilon
            loss_plus = _loss_only(params, src, tgt_in, tgt_out)
            tensor[idx] = original - epsilon
            loss_minus = _loss_only(params, src, tgt_in, tgt_out)
            tensor[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            a = float(analytic[name][idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            max_rel_error = max(max_rel_error, rel)
    return max_rel_error


def flip_attention_gradients(grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Sign-flip every attention projection gradient (harness sensitivity probe)."""
    flipped = dict(grads)
    for name in grads:
        if ".attn." in name or ".self." in name or ".cross." in name:
            flipped[name] = -grads[name]
    return flipped
