"""Seed derivation and the generator used for every random draw.

Streams come from numpy's Philox 4x64 counter-based bit generator, keyed by a
64-bit seed; normal variates use numpy's ziggurat ``standard_normal``. Child
seeds are derived with the SplitMix64 finalizer so that (seed, cell, trial)
tuples map to independent streams regardless of evaluation order.
"""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(*parts: int) -> int:
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & _MASK))
    return h


def philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK))
