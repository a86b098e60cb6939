"""Seeded random number generation.

Every stochastic operation in the package takes an integer seed and builds
its generator here.  The algorithm is numpy's PCG64 (a permuted congruential
generator with a published reference implementation), so identical seeds
reproduce identical streams across machines and sessions.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Return a fresh PCG64 generator for the given seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Derive `count` independent child generators from one seed.

    Uses numpy's SeedSequence spawning, which is deterministic, so workers
    (e.g. the trees of a forest) each get a reproducible stream.
    """
    seq = np.random.SeedSequence(int(seed))
    return [np.random.Generator(np.random.PCG64(child)) for child in seq.spawn(count)]
