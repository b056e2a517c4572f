"""Named, seedable, splittable random streams built on numpy's SeedSequence."""

from __future__ import annotations

import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode())


def stream(seed: int, *names: str | int) -> np.random.Generator:
    """Independent generator for ``(seed, names...)``; same inputs, same stream."""
    key = tuple(_key(n) if isinstance(n, str) else int(n) for n in names)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
