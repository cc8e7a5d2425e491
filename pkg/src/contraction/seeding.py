"""Counter-based seed derivation.

Every (master seed, model, n index, replicate) tuple is mapped to an
independent 64-bit seed by repeated splitmix64 mixing, so tasks can run in
any order or process without sharing a random stream.
"""

import hashlib

import numpy as np

MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def model_hash(model_id: str) -> int:
    """Stable 64-bit hash of a model identifier (independent of PYTHONHASHSEED)."""
    return int.from_bytes(hashlib.sha256(model_id.encode()).digest()[:8], "little")


def derive_seed(master: int, *keys) -> int:
    """Mix a master seed with integer or string keys into a 64-bit seed."""
    h = splitmix64(int(master) & MASK)
    for key in keys:
        k = model_hash(key) if isinstance(key, str) else int(key) & MASK
        h = splitmix64(h ^ k)
    return h


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
