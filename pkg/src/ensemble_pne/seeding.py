"""Per-trial random streams derived from one master seed.

Stream ``(seed, k1, k2, ...)`` is a ``SeedSequence`` spawn key, so each trial's
draws depend only on the master seed and its own index, never on how trials
are scheduled.
"""
from __future__ import annotations

import numpy as np


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(keys))))
