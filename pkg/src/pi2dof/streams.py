"""Deterministic derivation of child random streams.

Every stochastic routine in the package takes either a master seed or an
``np.random.Generator``.  Parallel or batched work derives independent child
streams with :func:`substream`, keyed by small integer paths, so results are
bitwise reproducible regardless of execution order.
"""

from __future__ import annotations

import numpy as np

# path tags used by the tuner / benchmark harness
TAG_DIRECTIONS = 0
TAG_ROLLOUT = 1
TAG_PROBE = 2
TAG_EXPERIMENT = 3


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return a generator for the child stream identified by (master_seed, *path)."""
    keys = [int(master_seed)] + [int(k) for k in path]
    if any(k < 0 for k in keys):
        raise ValueError(f"stream keys must be non-negative, got {keys}")
    return np.random.default_rng(np.random.SeedSequence(keys))
