"""Deterministic RNG derivation.

Every stochastic operation in the package draws from a generator derived
from a single 64-bit root seed plus a tuple of string/int tags, so runs
are reproducible and independent streams never collide.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Return a Generator for (seed, *tags), independent across tag tuples."""
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(8, "little", signed=False))
    for t in tags:
        h.update(repr(t).encode())
    entropy = int.from_bytes(h.digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=entropy))
