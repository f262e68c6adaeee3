"""Named, splittable random streams.

Every consumer derives its own child stream from ``(seed, name, ...)`` so that
adding a new sampler never shifts the draws of an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


def make_rng(seed: int, *names) -> np.random.Generator:
    """Generator for the substream ``names`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.default_rng(ss)


def derive_seed(seed: int, *names) -> int:
    """Integer seed for a substream, for APIs that only accept ints."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
