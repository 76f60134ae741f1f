"""Reproducible, splittable random streams.

Every stream is a Philox counter-based generator keyed by ``(seed, stream_id)``
so that two streams with the same key replay bit-identical draws and distinct
keys never share a counter sequence.  Gaussian variates are produced by
inverse-CDF transformation of single uniforms, so each normal consumes exactly
one uniform and the number of draws per transition is fixed per chain family.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_HALF_ULP = 2.0**-54


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class RngStream:
    """A keyed random stream.

    Parameters
    ----------
    seed : int
        64-bit unsigned seed.
    stream_id : int
        64-bit unsigned stream identifier.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        seed, stream_id = int(seed), int(stream_id)
        if not (0 <= seed <= _MASK64 and 0 <= stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")
        self.seed = seed
        self.stream_id = stream_id
        key = np.array([seed, stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def substream(self, index: int) -> "RngStream":
        """Deterministically derived child stream (same seed, mixed stream id)."""
        child = _splitmix64(self.stream_id ^ _splitmix64(int(index) + 1))
        return RngStream(self.seed, child)

    def fresh(self) -> "RngStream":
        """A new stream with the same key, replaying from the start."""
        return RngStream(self.seed, self.stream_id)

    def uniform(self, size=None):
        """Uniforms on the open interval (0, 1)."""
        return self._gen.random(size) + _HALF_ULP

    def normal(self, size=None):
        """Standard normals by inverse CDF, one uniform per variate."""
        return ndtri(self.uniform(size))

    def as_dict(self):
        return {"seed": self.seed, "stream_id": self.stream_id}


def standard_normal_from_uniform(u):
    return ndtri(u)
