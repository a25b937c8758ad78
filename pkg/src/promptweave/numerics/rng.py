"""Seeded random streams.

All randomness goes through :class:`Rng`, which wraps numpy's Philox-4x64-10
counter-based bit generator keyed from a :class:`numpy.random.SeedSequence`.
Philox output is defined by (key, counter) alone, so a given seed yields the
same draws on every platform. Independent sub-streams are derived with
:meth:`Rng.fork`, which hashes extra integer/str keys into a new seed
sequence; this keeps e.g. the shuffle order of epoch 7 independent of how
many draws earlier epochs consumed.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFFFFFFFFFF


class Rng:
    def __init__(self, seed: int, *path):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(_key(p) for p in path)
        ss = np.random.SeedSequence([self.seed, *self.path])
        self.gen = np.random.Generator(np.random.Philox(ss))

    def fork(self, *keys) -> Rng:
        return Rng(self.seed, *self.path, *keys)

    # thin pass-throughs used across the package
    def normal(self, size=None, scale: float = 1.0, dtype=np.float64) -> np.ndarray:
        return (self.gen.standard_normal(size) * scale).astype(dtype)

    def uniform(self, size=None) -> np.ndarray:
        return self.gen.random(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def random(self, size=None):
        return self.gen.random(size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"
