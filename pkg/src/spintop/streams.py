"""Deterministic random-number streams for parallel trajectory work.

Every stochastic quantity in the package is drawn from a counter-based
generator (Philox) keyed by the master seed plus an integer path, e.g.
``(trajectory_index,)`` or ``(sweep_index, trajectory_index)``.  Streams
for distinct paths are statistically independent and their values do not
depend on scheduling order, so a run fanned out over any number of
workers reproduces the single-worker output bit for bit.
"""
from __future__ import annotations

import numpy as np

__all__ = ["substream", "spawn_seeds"]


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return the generator for ``(master_seed, *path)``.

    The same arguments always yield a generator producing the same
    sequence, independent of how many other streams exist or in which
    order they are created.
    """
    if master_seed < 0:
        raise ValueError("master_seed must be non-negative")
    if any(p < 0 for p in path):
        raise ValueError("stream path components must be non-negative")
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))


def spawn_seeds(master_seed: int, n: int, *prefix: int) -> list[np.random.Generator]:
    """Generators for paths ``(*prefix, 0) .. (*prefix, n-1)``."""
    return [substream(master_seed, *prefix, i) for i in range(n)]
