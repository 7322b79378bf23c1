"""Deterministic seed derivation for nested, parallel-safe random streams."""
from __future__ import annotations

import numpy as np


def derive_seed(*parts: int) -> int:
    """Collapse non-negative integer parts into one stable 64-bit seed.

    The same parts always yield the same seed, independent of process,
    thread count, or call order, so derived streams can be reproduced in
    isolation.
    """
    entropy = []
    for p in parts:
        p = int(p)
        if p < 0:
            raise ValueError(f"seed parts must be non-negative, got {p}")
        entropy.append(p)
    words = np.random.SeedSequence(entropy).generate_state(2)
    return (int(words[0]) << 32) | int(words[1])


def child_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for stream `index` under `seed`, reproducible in isolation."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))
