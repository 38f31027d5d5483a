"""Seeded random stream used for every stochastic draw in the package.

Uniforms come from numpy's PCG64 bit generator; standard normals are made
from those uniforms with the Box-Muller transform so that the normal stream
is fully determined by the uniform stream.
"""

from __future__ import annotations

import numpy as np


class Rng:
    """Deterministic pseudorandom stream.

    Normals are produced in Box-Muller pairs and both members are consumed in
    order; an odd request leaves the second member cached for the next call.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self._spare: float | None = None

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform reals in [0, 1)."""
        return self._gen.random(size)

    def _box_muller(self, pairs: int) -> np.ndarray:
        u = self._gen.random(2 * pairs)  # consecutive (u1, u2) per pair
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out

    def normal(self, size=None) -> np.ndarray | float:
        """Standard normal draws with the given shape (scalar when size is None)."""
        shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
        count = int(np.prod(shape, dtype=np.int64))
        head = []
        if count and self._spare is not None:
            head.append(self._spare)
            self._spare = None
            count -= 1
        need = count
        pairs = (need + 1) // 2
        fresh = self._box_muller(pairs) if pairs else np.empty(0)
        if fresh.size > need:
            self._spare = float(fresh[-1])
            fresh = fresh[:need]
        values = np.concatenate([np.asarray(head, dtype=float), fresh])
        if size is None:
            return float(values[0])
        return values.reshape(shape)

    def uniform_range(self, low: float, high: float, size) -> np.ndarray:
        return low + (high - low) * self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def substream(self, index: int) -> "Rng":
        """Independent stream derived deterministically from (seed, index)."""
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, int(index)])))
        child._spare = None
        return child
