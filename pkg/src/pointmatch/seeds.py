"""Named random streams split from one root seed.

Every consumer (scene generation, weak-label sampling, each augmentation
view, weight init, batch shuffling) draws from its own stream so that two
runs differing only in, say, the ablation variant see identical data and
initialization.
"""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("scenegen", "weaklabels", "augment-A", "augment-B", "init", "shuffle")


def _key(name: str) -> int:
    return zlib.crc32(name.encode())


def seed_sequence(root: int, name: str, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(root), spawn_key=(_key(name), *map(int, keys)))


def stream(root: int, name: str, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root, name, *keys))


def derive_seed(root: int, name: str, *keys: int) -> int:
    """A 63-bit integer seed, for APIs that take plain ints."""
    return int(seed_sequence(root, name, *keys).generate_state(2, np.uint64)[0] >> np.uint64(1))
