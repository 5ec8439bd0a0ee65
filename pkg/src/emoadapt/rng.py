"""Counter-based deterministic pseudo-randomness.

Every random draw in the package (weight init, epoch shuffling, dropout
masks, glyph jitter) comes from a splitmix64 stream keyed by a seed plus a
string label, so identical seeds give bit-identical results on any platform
and any NumPy version.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = float(1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_key(*parts: int | str) -> int:
    """Hash seed components (ints and labels) into a 64-bit stream key."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "little")


def counter_uniform(key: int, count: int, offset: int = 0) -> np.ndarray:
    """Uniform [0, 1) floats at counter positions offset..offset+count-1.

    Pure function of (key, position); used directly for dropout masks where
    the value at a flat element index must not depend on batch shape.
    """
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    z = (np.uint64(key & 0xFFFFFFFFFFFFFFFF) + idx * _GAMMA) & _MASK
    bits = _mix(z) >> np.uint64(11)
    return bits.astype(np.float64) / _TWO53


class Rng:
    """Stateful counter wrapper over the splitmix64 stream."""

    def __init__(self, *key_parts: int | str):
        self._key = derive_key(*key_parts)
        self._counter = 0

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = counter_uniform(self._key, n, self._counter)
        self._counter += n
        return low + (high - low) * u

    def integers(self, low: int, high: int, n: int = 1) -> np.ndarray:
        """Integers in [low, high] inclusive."""
        u = self.uniform(n)
        return low + np.minimum((u * (high - low + 1)).astype(np.int64), high - low)

    def choice(self, p_true: float) -> bool:
        return bool(self.uniform(1)[0] < p_true)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * (i + 1))
            if j > i:
                j = i
            perm[i], perm[j] = perm[j], perm[i]
        return perm
