"""Model and training hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigurationError


@dataclass(frozen=True)
class TransformerConfig:
    """Compact encoder-decoder shape: 4 layers, d_model 100, FFN 400.

    The vocabulary's size and special ids are baked in so checkpoints are
    self-contained.
    """

    vocab_size: int
    num_layers: int = 4
    d_model: int = 100
    d_ff: int = 400
    num_heads: int = 4
    dropout: float = 0.1
    max_seq_len: int = 128
    tie_embeddings: bool = True
    pad_id: int = 0
    bos_id: int = 2
    eos_id: int = 3
    dtype: str = "float64"

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigurationError(f"vocab_size must be positive, got {self.vocab_size}")
        if self.num_layers < 1 or self.d_model < 1 or self.d_ff < 1 or self.max_seq_len < 1:
            raise ConfigurationError("layer count and layer sizes must be positive")
        if self.num_heads < 1 or self.d_model % self.num_heads != 0:
            raise ConfigurationError(
                f"num_heads ({self.num_heads}) must divide d_model ({self.d_model})"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype}")

    @classmethod
    def for_vocab(cls, vocab, **overrides) -> "TransformerConfig":
        """Bind a config to a vocabulary (size and special ids)."""
        return cls(
            vocab_size=len(vocab),
            pad_id=vocab.pad_id,
            bos_id=vocab.bos_id,
            eos_id=vocab.eos_id,
            **overrides,
        )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    @property
    def np_dtype(self):
        import numpy as np

        return np.dtype(self.dtype)


@dataclass(frozen=True)
class TrainingConfig:
    """Optimization settings: Adam at a fixed learning rate, batches of 32."""

    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    seed: int = 0
    grad_clip_norm: float | None = None
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
