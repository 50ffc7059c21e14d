"""Deterministic, splittable random number generation.

Every stochastic operation in this package takes an explicit ``Rng``. The
generator is counter-based (Philox) and keyed by ``(seed, stream)``, so
independent streams can be derived from one seed without any shared state.
Same key => same draw sequence, on every platform.
"""

from __future__ import annotations

import numpy as np


class Rng:
    """Thin wrapper around a Philox-backed numpy Generator."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        )

    def split(self, stream: int) -> "Rng":
        """Derive an independent stream from the same seed."""
        return Rng(self.seed, stream)

    # draw methods delegate to the underlying Generator

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size=size)

    def poisson(self, lam, size=None):
        return self._gen.poisson(lam, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"
