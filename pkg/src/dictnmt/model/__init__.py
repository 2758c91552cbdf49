"""Compact transformer encoder-decoder with manual differentiation."""

from .config import TrainingConfig, TransformerConfig
from .decode import greedy_decode, greedy_decode_batch
from .gradcheck import flip_attention_gradients, grad_check
from .train import AdamOptimizer, TrainingHistory, encode_pairs, train
from .transformer import (
    ModelParams,
    SequenceTooLongError,
    forward,
    init_model,
    load_checkpoint,
    loss,
    loss_and_grads,
    save_checkpoint,
)

__all__ = [
    "AdamOptimizer",
    "ModelParams",
    "SequenceTooLongError",
    "TrainingConfig",
    "TrainingHistory",
    "TransformerConfig",
    "encode_pairs",
    "flip_attention_gradients",
    "forward",
    "grad_check",
    "greedy_decode",
    "greedy_decode_batch",
    "init_model",
    "load_checkpoint",
    "loss",
    "loss_and_grads",
    "save_checkpoint",
    "train",
]
