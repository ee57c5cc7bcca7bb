# src/meanfield_lab/rng.py
"""Counter-based random streams addressed by (seed, key...)."""
from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, *key: int) -> np.random.Generator:
    """
    Independent Philox stream for ``key``. The same (seed, key) always yields
    the same numbers, whatever else is drawn and in whatever order.
    """
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def normal_block(seed: int, prefix: tuple, keys, size: int) -> np.ndarray:
    """Rows of standard normals, row j drawn from stream(seed, *prefix, keys[j])."""
    return np.stack([stream(seed, *prefix, k).standard_normal(size) for k in keys])
