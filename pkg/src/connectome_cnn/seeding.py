"""Deterministic seed derivation.

Every random stream in the toolkit is a ``numpy.random.PCG64`` generator
seeded by ``SeedSequence(entropy=master, spawn_key=path)``, where ``path`` is
a tuple of small non-negative integers naming the stage and item, e.g.
``(STAGE_SIMULATE, NOISE, instance_index)``.  SeedSequence hashes the entropy
and the spawn key together, so two different paths give statistically
independent streams and any single stream can be regenerated in isolation
from the master seed alone.
"""

import numpy as np

# stage identifiers (first element of a derivation path)
STAGE_SIMULATE = 1
STAGE_FOLDS = 2
STAGE_TRAIN = 3
STAGE_SWEEP = 4
STAGE_BASE = 5

MASK64 = (1 << 64) - 1


def seed_sequence(master, *path):
    return np.random.SeedSequence(entropy=int(master) & MASK64,
                                  spawn_key=tuple(int(p) for p in path))


def generator(master, *path):
    """Return a PCG64 generator for ``master`` and derivation ``path``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master, *path)))


def derive_seed(master, *path):
    """Return a derived 64-bit integer seed (for handing to sub-stages)."""
    state = seed_sequence(master, *path).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
