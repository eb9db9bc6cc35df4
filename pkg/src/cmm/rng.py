"""Seedable, splittable xorshift64* generator.

Every random draw in the package (initialisation, synthetic data, epoch
shuffling) goes through this generator so streams are reproducible at the
bit level and can be re-implemented elsewhere from the algorithm alone.
"""

from __future__ import annotations

import hashlib
import math

ALGORITHM = "xorshift64*/splitmix64-seed/box-muller"

_MASK = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, int):
        return tag & _MASK
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class Xorshift64Star:
    """xorshift64* (Vigna 2016) seeded through splitmix64."""

    def __init__(self, seed: int):
        self.seed = seed
        state = splitmix64(seed & _MASK)
        self._state = state if state != 0 else 0x9E3779B97F4A7C15
        self._spare: float | None = None

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self._state = x
        return (x * _MULT) & _MASK

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 bits of mantissa."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def normal(self) -> float:
        # Box-Muller; the second variate of each pair is cached.
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n)."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def split(self, tag: int | str) -> "Xorshift64Star":
        """Independent child stream keyed by ``tag``; does not advance self."""
        return Xorshift64Star(derive_seed(self.seed, tag))


def derive_seed(seed: int, tag: int | str) -> int:
    return splitmix64(splitmix64(seed & _MASK) ^ splitmix64(_tag_to_int(tag)))
