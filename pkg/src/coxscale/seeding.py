"""Deterministic seed derivation for replicated and parallel work.

Child seeds come from the SplitMix64 sequence of the parent seed: the ``i``-th
child of ``s`` is ``mix(s + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)`` where
``mix`` is the SplitMix64 output finaliser.  Paths of indices apply the rule
repeatedly, so ``derive_seed(s, 3, 1)`` is the second child of the fourth
child of ``s``.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    s = int(master) & _MASK
    for i in path:
        s = _mix((s + (int(i) + 1) * _GOLDEN) & _MASK)
    return s


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK))
