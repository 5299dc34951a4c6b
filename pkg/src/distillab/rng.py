"""Seeded, splittable random streams.

Every draw in this package flows through :class:`Rng`, a thin wrapper around
numpy's PCG64 bit generator keyed by an integer path ``(seed, label, ...)``.
The path is mixed by ``numpy.random.SeedSequence``, so streams with different
paths are statistically independent and a given path always reproduces the
same sequence bit for bit. Splitting streams by label (instead of sharing one
generator) means adding or removing one consumer never perturbs the draws
seen by any other consumer.
"""

from __future__ import annotations

import numpy as np

# Stream labels. One per independent consumer of randomness.
INIT = 1
BATCHES = 2
AUGMENT = 3
REGION_PAIR = 4
REGION_AUGMENT = 5
REGION_LAMBDA = 6
NOISE = 7
DATAGEN = 8
SPLIT = 9
FEW_SHOT = 10


class Rng:
    """A named PCG64 stream addressed by an integer path."""

    def __init__(self, seed: int, *path: int):
        if seed < 0:
            raise ValueError(f"seed must be nonnegative, got {seed}")
        self.path = (int(seed),) + tuple(int(p) for p in path)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.path))
        )

    def split(self, *path: int) -> "Rng":
        """Child stream at ``self.path + path``; independent of the parent."""
        return Rng(*self.path, *path)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    @property
    def state(self):
        return self._gen.bit_generator.state

    @state.setter
    def state(self, value):
        self._gen.bit_generator.state = value
