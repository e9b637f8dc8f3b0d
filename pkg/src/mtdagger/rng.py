"""Deterministic RNG substreams.

Every stochastic phase of a run draws from its own generator, derived from
the master seed plus a fixed integer path (phase tag, round, task). Results
are therefore independent of execution order: tasks could be collected
concurrently and still reproduce the sequential run bit for bit.
"""

from __future__ import annotations

import numpy as np

# Phase tags used as the second component of a substream path.
COLLECT = 0
TRAIN = 1
EVAL = 2
INIT = 3
SUITE = 4
BC_DATA = 5


def substream(*path: int) -> np.random.Generator:
    """Generator keyed by an integer path, e.g. (master_seed, TRAIN, round)."""
    parts = tuple(int(p) for p in path)
    if any(p < 0 for p in parts):
        raise ValueError(f"substream path components must be non-negative, got {parts}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(parts)))
