"""Deterministic splittable random streams.

Every sampler takes a ``numpy.random.Generator``.  Experiments derive one
Philox (counter-based) stream per work chunk from a root seed, so results are
reproducible bit for bit and independent of how chunks are scheduled across
threads.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, k: int = 0) -> np.random.Generator:
    """Stream ``k`` of the family keyed by ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(k),))
    return np.random.Generator(np.random.Philox(ss))


def substream(seed: int, *path: int) -> np.random.Generator:
    """A stream addressed by a tuple, for nested deterministic splits."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
