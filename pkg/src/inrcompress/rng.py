"""Deterministic random streams.

Uniform draws come from numpy's PCG64 bit generator, whose output is
specified bit-for-bit and identical across platforms.  Normal deviates are
produced by the Box-Muller transform on top of those uniforms rather than by
numpy's ziggurat sampler, so the whole stream is defined by this file.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def name_hash(name: str) -> int:
    """64-bit digest of a string (BLAKE2b, little-endian)."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, name: str) -> int:
    """Child seed for a named sub-stream: ``seed XOR hash(name)``."""
    return (int(seed) & _MASK64) ^ name_hash(name)


class SeededRng:
    """Seeded stream of uniform and standard-normal reals."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        u = self._gen.random(size)
        return low + (high - low) * u

    def normal(self, size=None, loc=0.0, scale=1.0) -> np.ndarray:
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        u1 = self._gen.random(pairs)
        u2 = self._gen.random(pairs)
        # 1 - u1 lies in (0, 1], keeps the log finite
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        z = loc + scale * z[:n]
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def child(self, name: str) -> "SeededRng":
        return SeededRng(derive_seed(self.seed, name))


def seeded_rng(seed: int) -> SeededRng:
    return SeededRng(seed)
