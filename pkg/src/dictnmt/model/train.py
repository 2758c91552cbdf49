"""Training loop: Adam over seeded, length-grouped batches.

Determinism contract: a fixed (seed, data, config) triple reproduces the
weight trajectory exactly on one machine at a fixed thread count. All
shuffling and dropout randomness derives from the training seed.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError
from ..seeding import rng_for
from ..tokenizer import Vocabulary, encode
from .config import TrainingConfig
from .transformer import ModelParams, loss_and_grads, _forward_cached, _loss_and_dlogits

logger = logging.getLogger(__name__)


@dataclass
class TrainingHistory:
    """Per-epoch bookkeeping for a completed (or early-stopped) run."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] | None = None
    epoch_seconds: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def epochs_completed(self) -> int:
        return len(self.train_loss)


class AdamOptimizer:
    """Standard Adam with bias correction and optional global-norm clipping."""

    def __init__(self, tensors: dict[str, np.ndarray], cfg: TrainingConfig):
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        if cfg.grad_clip_norm is not None:
            total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > cfg.grad_clip_norm:
                scale = cfg.grad_clip_norm / total
                grads = {k: g * scale for k, g in grads.items()}
        self.step_count += 1
        t = self.step_count
        b1, b2 = cfg.beta1, cfg.beta2
        lr = cfg.learning_rate * math.sqrt(1.0 - b2**t) / (1.0 - b1**t)
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            tensors[name] -= lr * m / (np.sqrt(v) + cfg.adam_eps)


def encode_pairs(dataset, vocab: Vocabulary, max_seq_len: int):
    """Encode (intermediate, target) pairs; drop over-length ones (logged)."""
    encoded = []
    dropped = 0
    for intermediate, target in dataset.pairs:
        src = encode(intermediate.surfaces(), vocab).ids
        tgt = encode(target, vocab).ids
        if len(src) > max_seq_len or len(tgt) > max_seq_len:
            dropped += 1
            continue
        encoded.append((src, tgt))
    if dropped:
        logger.warning("dropped %d pairs exceeding max_seq_len after tokenization", dropped)
    if not encoded:
        raise ValueError("no trainable pairs after encoding")
    return encoded


def _group_batches(encoded, batch_size: int):
    """Group by similar length (stable) to bound padding waste."""
    order = sorted(range(len(encoded)),
                   key=lambda i: (len(encoded[i][0]) + len(encoded[i][1]), len(encoded[i][0]), i))
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def _pad_batch(encoded, indices, pad_id: int):
    """Teacher-forcing arrays (src, tgt_in, tgt_out) padded to batch maxima."""
    srcs = [encoded[i][0] for i in indices]
    tgts = [encoded[i][1] for i in indices]
    max_src = max(len(s) for s in srcs)
    max_tgt = max(len(t) for t in tgts) - 1
    src = np.full((len(indices), max_src), pad_id, dtype=np.int64)
    tgt_in = np.full((len(indices), max_tgt), pad_id, dtype=np.int64)
    tgt_out = np.full((len(indices), max_tgt), pad_id, dtype=np.int64)
    for row, (s, t) in enumerate(zip(srcs, tgts)):
        src[row, : len(s)] = s
        tgt_in[row, : len(t) - 1] = t[:-1]
        tgt_out[row, : len(t) - 1] = t[1:]
    return src, tgt_in, tgt_out


def _mean_eval_loss(params: ModelParams, encoded, batch_size: int) -> float:
    pad_id = params.config.pad_id
    total, tokens = 0.0, 0
    for indices in _group_batches(encoded, batch_size):
        src, tgt_in, tgt_out = _pad_batch(encoded, indices, pad_id)
        logits, _ = _forward_cached(params, src, tgt_in, False, None)
        value, _ = _loss_and_dlogits(logits, tgt_out, pad_id)
        n = int((tgt_out != pad_id).sum())
        total += value * n
        tokens += n
    return total / tokens


def train(
    params: ModelParams,
    dataset,
    vocab: Vocabulary,
    tcfg: TrainingConfig,
    validation=None,
) -> tuple[ModelParams, TrainingHistory]:
    """Optimize a copy of ``params`` on a DictDataset; returns it plus history.

    Batches are fixed once (length-grouped) and their order reshuffled each
    epoch from the training seed. Raises DivergenceError on a non-finite
    loss, naming the offending step.
    """
    if len(dataset.pairs) == 0:
        raise ValueError("dataset is empty")
    params = params.copy()
    cfg = params.config
    encoded = encode_pairs(dataset, vocab, cfg.max_seq_len)
    val_encoded = (
        encode_pairs(validation, vocab, cfg.max_seq_len) if validation is not None else None
    )
    batches = _group_batches(encoded, tcfg.batch_size)
    optimizer = AdamOptimizer(params.tensors, tcfg)
    dropout_rng = rng_for(tcfg.seed, "dropout")

    history = TrainingHistory(
        val_loss=[] if val_encoded is not None else None,
        metadata={
            "n_pairs": len(encoded),
            "n_batches": len(batches),
            "cpu_count": os.cpu_count(),
            "blas_threads_env": {
                var: os.environ.get(var)
                for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
            },
        },
    )

    step = 0
    best_val = np.inf
    stale_epochs = 0
    for epoch in range(tcfg.epochs):
        started = time.perf_counter()
        order = rng_for(tcfg.seed, "batch-order", epoch).permutation(len(batches))
        epoch_loss, epoch_tokens = 0.0, 0
        for batch_index in order:
            src, tgt_in, tgt_out = _pad_batch(encoded, batches[batch_index], cfg.pad_id)
            value, grads = loss_and_grads(
                params, src, tgt_in, tgt_out, train_mode=True, rng=dropout_rng
            )
            step += 1
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss at step {step} (epoch {epoch + 1}, batch {batch_index})"
                )
            optimizer.step(params.tensors, grads)
            n = int((tgt_out != cfg.pad_id).sum())
            epoch_loss += value * n
            epoch_tokens += n
        history.train_loss.append(epoch_loss / epoch_tokens)
        if val_encoded is not None:
            history.val_loss.append(_mean_eval_loss(params, val_encoded, tcfg.batch_size))
        history.epoch_seconds.append(time.perf_counter() - started)
        logger.info(
            "epoch %d/%d: train loss %.4f%s",
            epoch + 1,
            tcfg.epochs,
            history.train_loss[-1],
            f", val loss {history.val_loss[-1]:.4f}" if val_encoded is not None else "",
        )
        if tcfg.early_stop_patience is not None and val_encoded is not None:
            if history.val_loss[-1] < best_val - 1e-12:
                best_val = history.val_loss[-1]
                stale_epochs = 0
            else:
                stale_epochs += 1
                if stale_epochs >= tcfg.early_stop_patience:
                    logger.info("early stop after %d stale epochs", stale_epochs)
                    break
    return params, history
