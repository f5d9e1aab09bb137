"""Named, counter-based random streams.

Every stochastic component draws from a generator derived from the single
top-level seed plus a tuple of names, so the stream a component sees does not
depend on how many numbers other components consumed before it.
"""

from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: object) -> int:
    if isinstance(name, (int, np.integer)) and not isinstance(name, bool):
        return int(name) & 0xFFFFFFFF
    return zlib.crc32(str(name).encode("utf-8"))


def stream(seed: int, *names: object) -> np.random.Generator:
    """Return a Philox generator keyed on ``seed`` and the path ``names``."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    entropy = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF]
    seq = np.random.SeedSequence(entropy, spawn_key=tuple(_name_key(n) for n in names))
    return np.random.Generator(np.random.Philox(seq))
