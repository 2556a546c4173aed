"""Hierarchical seed derivation.

Every random draw descends from one master seed along a fixed path
``master -> cell -> replication -> stream``, using numpy's
:class:`~numpy.random.SeedSequence` spawn keys.  A job's randomness depends
only on its position in that tree, never on the order jobs run in.
"""

import enum
import typing as t

import numpy as np

SeedLike = t.Union[int, np.random.SeedSequence, np.random.Generator, None]


class Stream(enum.IntEnum):
    DESIGN = 0
    TRAIN = 1
    TEST = 2
    SPLIT = 3
    LEARNER = 4
    BOOTSTRAP = 5
    CMC = 6


def derive(seed: int, *path: int) -> np.random.SeedSequence:
    """The seed sequence at ``path`` below the master ``seed``."""
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(p) for p in path))


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    """A seed sequence the caller may ``spawn`` from.  A sequence passed in
    is copied, so spawning never advances the original.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size
        )
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(0, 2**63)))
    return np.random.SeedSequence(seed)


def to_int(seed: SeedLike) -> int:
    """A 64-bit integer seed, e.g. for :class:`LearnerParams`."""
    return int(as_seed_sequence(seed).generate_state(1, dtype=np.uint64)[0])
