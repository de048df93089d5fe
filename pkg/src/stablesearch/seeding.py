"""Deterministic seed derivation.

One master seed fans out to independent per-task streams through
SeedSequence spawn keys, keyed by (lane, counter).  Derivation depends only
on those integers, never on scheduling, so any parallelism degree reproduces
the same streams.
"""

from __future__ import annotations

import numpy as np

SUBSAMPLE_LANE = 1
SEARCH_LANE = 2
DATAGEN_LANE = 3
PIPELINE_LANE = 4
PARAMETERIZE_LANE = 5


def derived_seed(master: int, lane: int, index: int) -> int:
    seq = np.random.SeedSequence(master, spawn_key=(lane, index))
    return int(seq.generate_state(2, dtype=np.uint64)[0])


def derived_rng(master: int, lane: int, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(master, spawn_key=(lane, index))
    )
