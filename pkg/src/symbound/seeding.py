"""Counter-based seed derivation.

Child seeds are produced with the splitmix64 finalizer::

    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    z =  z ^ (z >> 31)

so series ``i`` of a dataset drawn with master seed ``s`` always uses
``mix64(s, i)`` regardless of how generation is scheduled across workers.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB

# Stream tags keep independent consumers of one master seed apart.
STREAM_DATASET = 1
STREAM_POOL = 2
STREAM_FRESH_TEST = 3
STREAM_FRESH_DISC = 4
STREAM_TRAIN = 5
STREAM_SIGMA = 6
STREAM_ASCENT = 7
STREAM_BOOTSTRAP = 8
STREAM_EXPERIMENT = 9


def mix64(seed: int, index: int) -> int:
    z = (int(seed) + (int(index) + 1) * GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *path: int) -> int:
    """Fold ``mix64`` along ``path``; ``derive_seed(s)`` is ``s`` masked to 64 bits."""
    out = int(seed) & MASK64
    for p in path:
        out = mix64(out, p)
    return out


def rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *path))
