"""Reproducible random streams.

Every random draw in the package comes from a Philox (counter-based) generator
keyed by ``(seed, *key)``. Replicate ``r`` of an experiment gets its own key,
so replicates can run in any order or on any thread and still reproduce.
"""

from __future__ import annotations

import numpy as np

# stream ids; keep stable, they are part of the reproducibility contract
POINTS = 1
H0_OBS = 2
H1_OBS = 3
CALIBRATION = 10
VALIDATION = 11
MISS = 12
SPECTRUM = 13
RAYLEIGH_MC = 20

_MASK64 = (1 << 64) - 1


def _seed_sequence(seed: int, key: tuple[int, ...]) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))


def generator(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, key)))


def derive_seed(seed: int, *key: int) -> int:
    """Child 64-bit seed for ``(seed, *key)``."""
    return int(_seed_sequence(seed, key).generate_state(1, np.uint64)[0])
