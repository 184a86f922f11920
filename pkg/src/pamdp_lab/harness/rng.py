"""Named, splittable random streams.

Every stream is derived from a root seed and a path of names:
``stream(seed, "rep", 3, "noise")`` spawns from SeedSequence(seed) with
spawn_key = (crc32("rep"), 3, crc32("noise")). The same path always gives
the same generator, independent of creation order or process.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("integer stream names must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(seed, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(_key(p) for p in path))


def stream(seed, *path) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *path))


def replication_seeds(seed, reps, name="rep"):
    """Integer seeds for replications 0..reps-1, stable under changes of reps."""
    return [int(seed_sequence(seed, name, k).generate_state(1, np.uint64)[0] >> np.uint64(1))
            for k in range(reps)]
