"""Deterministic seed derivation.

All randomness in an experiment flows from one master seed. Stage- and
item-level generators get their own seeds derived by hashing the master
seed together with string labels, so stages can run in any order (or in
parallel) without perturbing each other's random streams.
"""

import hashlib

import numpy as np


def derive_seed(master_seed: int, *labels) -> int:
    """Derive a child seed from a master seed and a sequence of labels."""
    h = hashlib.sha256(str(int(master_seed)).encode("utf-8"))
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(master_seed: int, *labels) -> np.random.Generator:
    """A fresh generator seeded from ``derive_seed(master_seed, *labels)``."""
    return np.random.default_rng(derive_seed(master_seed, *labels))
