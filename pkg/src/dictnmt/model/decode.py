"""Greedy autoregressive decoding."""

from __future__ import annotations

import numpy as np

from .transformer import ModelParams, forward


def greedy_decode(params: ModelParams, src_ids, max_len: int) -> list[int]:
    """Decode one source sequence: argmax token by token.

    Starts from bos, stops at eos or after ``max_len`` generated tokens,
    and is fully deterministic.
    """
    return greedy_decode_batch(params, [list(src_ids)], max_len)[0]


def greedy_decode_batch(params: ModelParams, src_seqs, max_len: int) -> list[list[int]]:
    """Decode many sources at once, stepping all of them in lockstep.

    Finished rows are frozen (their tail is PAD) until every row has
    produced eos or ``max_len`` tokens.
    """
    cfg = params.config
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    n = len(src_seqs)
    if n == 0:
        return []
    max_src = max(len(s) for s in src_seqs)
    src = np.full((n, max_src), cfg.pad_id, dtype=np.int64)
    for row, s in enumerate(src_seqs):
        src[row, : len(s)] = s

    out = np.full((n, max_len + 1), cfg.pad_id, dtype=np.int64)
    out[:, 0] = cfg.bos_id
    finished = np.zeros(n, dtype=bool)
    length = np.ones(n, dtype=np.int64)
    for t in range(1, max_len + 1):
        logits = forward(params, src, out[:, :t], train_mode=False)
        next_ids = np.argmax(logits[:, -1, :], axis=-1)
        active = ~finished
        out[active, t] = next_ids[active]
        length[active] = t + 1
        finished |= active & (next_ids == cfg.eos_id)
        if finished.all():
            break
    return [out[row, : length[row]].tolist() for row in range(n)]
