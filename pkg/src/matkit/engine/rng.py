"""Deterministic seeded randomness built on splitmix64.

Every stochastic consumer (data order, diffusion noise, weight init, ...)
pulls from its own named stream, so adding draws to one consumer never
perturbs another.  All draws are reproducible bit-for-bit from the root
seed alone, independent of numpy's global state.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def _finalize(z: np.ndarray) -> np.ndarray:
    # splitmix64 output mixing of raw counter states; wraparound is intended
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _U64_MASK
    return h


class Stream:
    """One independent splitmix64 sequence."""

    def __init__(self, seed: int):
        self._state = np.uint64(seed & _U64_MASK)

    def u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit draws."""
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64) * _GAMMA
            out = _finalize(self._state + steps)
            self._state = self._state + np.uint64(n) * _GAMMA
        return out

    def uniform(self, shape=(), lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """Uniform draws in [lo, hi) as float64."""
        n = int(np.prod(shape)) if shape else 1
        u = (self.u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        u = lo + (hi - lo) * u
        return u.reshape(shape) if shape else float(u[0])

    def normal(self, shape=(), dtype=np.float64) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = 1.0 - (self.u64(m) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        u2 = (self.u64(m) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        z = z.astype(dtype)
        return z.reshape(shape) if shape else z.dtype.type(z[0])

    def randint(self, lo: int, hi: int, shape=()) -> np.ndarray:
        """Integer draws in [lo, hi) (modulo reduction; fine for small ranges)."""
        n = int(np.prod(shape)) if shape else 1
        span = np.uint64(hi - lo)
        v = (self.u64(n) % span).astype(np.int64) + lo
        return v.reshape(shape) if shape else int(v[0])

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        idx = np.arange(n)
        swaps = self.u64(n)
        for i in range(n - 1, 0, -1):
            j = int(swaps[i] % np.uint64(i + 1))
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def choice(self, n: int, k: int) -> np.ndarray:
        """k indices drawn without replacement from range(n)."""
        return self.permutation(n)[:k]


class Rng:
    """Root seed from which named streams are derived."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, name: str) -> Stream:
        mixed = _finalize(np.uint64((self.seed ^ _fnv1a64(name)) & _U64_MASK))
        return Stream(int(mixed))
