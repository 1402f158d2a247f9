"""Deterministic seed derivation.

Every random stream in the package is a numpy ``PCG64`` generator whose
integer seed comes from :func:`mix64`.  ``mix64`` folds its integer
arguments left to right through the SplitMix64 finalizer::

    h = 0
    for w in words:
        h = splitmix64(h ^ (w mod 2**64))

so a stream is fully identified by a tuple such as
``(base_seed, replicate, node_index)``.  Both SplitMix64 and PCG64 are
platform independent, which makes samples reproducible bit for bit.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix64(*words: int) -> int:
    h = 0
    for w in words:
        h = splitmix64(h ^ (int(w) & MASK64))
    return h


def key_index(key: str) -> int:
    """Stable 64-bit integer for a string key (used for cell-local seeds)."""
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


def generator(*words: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix64(*words)))
