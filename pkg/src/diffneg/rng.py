"""Seeded random streams with reproducible child derivation.

Every stochastic component in this package draws from a RandomSource.  The
generator is numpy's PCG64 seeded through SeedSequence, so a (seed, path)
pair identifies one stream regardless of platform or process.  Child streams
are derived from string or integer tags rather than by sharing a parent
generator, which keeps draw order inside one component independent of the
others.
"""

from __future__ import annotations

import zlib

import numpy as np

GENERATOR = "numpy PCG64 via SeedSequence"


def _tag_value(tag) -> int:
    # SeedSequence spawn keys are sequences of uint32-ranged ints; strings
    # hash with crc32, which is stable across processes (hash() is salted).
    if isinstance(tag, bool):
        raise TypeError("bool is not a valid stream tag")
    if isinstance(tag, (int, np.integer)):
        value = int(tag)
        if value < 0:
            raise ValueError(f"stream tags must be non-negative, got {value}")
        return value
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    raise TypeError(f"stream tags must be int or str, got {type(tag).__name__}")


class RandomSource:
    """One deterministic stream of random draws.

    The same seed and derivation path always produce the same sequence of
    values.  `child(*tags)` derives an independent stream; deriving the same
    tags twice gives two generators at the same starting state.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(_path)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, *tags) -> "RandomSource":
        """Derive an independent stream named by `tags` (ints or strings)."""
        return RandomSource(self.seed, self.path + tuple(_tag_value(t) for t in tags))

    def normal(self, shape=()) -> np.ndarray:
        """Standard normal draws, float64."""
        return self._gen.standard_normal(size=shape, dtype=np.float64)

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform draws on [0, 1), float64."""
        return self._gen.random(size=shape, dtype=np.float64)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high)."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        result = self._gen.integers(low, high, size=size)
        return int(result) if size is None else result

    def permutation(self, n: int) -> np.ndarray:
        """A uniform random permutation of range(n)."""
        return self._gen.permutation(n)

    def choice_weighted(self, values: np.ndarray, weights: np.ndarray) -> int:
        """Draw one entry of `values` with probability proportional to `weights`."""
        total = float(weights.sum())
        if not np.isfinite(total) or total <= 0.0:
            raise ValueError("weights must have a positive finite sum")
        # Inverse-CDF draw from a single uniform keeps the stream consumption
        # at one value per call, independent of len(values).
        u = self._gen.random() * total
        idx = int(np.searchsorted(np.cumsum(weights), u, side="right"))
        idx = min(idx, len(values) - 1)
        return int(values[idx])

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, path={self.path})"
