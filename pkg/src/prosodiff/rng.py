"""Seed-stream derivation.

Every run owns a single integer seed. Each component draws from its own
substream so that, e.g., adding training steps never perturbs corpus
generation. Substreams are derived with ``numpy.random.SeedSequence`` spawn
keys, which is stable across processes and platforms.

Stream ids:
    0  corpus generation (plus one child per utterance)
    1  parameter initialisation
    2  training (batch order, step/noise draws)
    3  sampling (plus one child per sampling job)
    4  miscellaneous (split shuffling, text embedding tables)
"""

from __future__ import annotations

import numpy as np

CORPUS_STREAM = 0
INIT_STREAM = 1
TRAIN_STREAM = 2
SAMPLE_STREAM = 3
MISC_STREAM = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return a generator for the substream identified by ``key``."""
    if not key:
        raise ValueError("substream key must not be empty")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
