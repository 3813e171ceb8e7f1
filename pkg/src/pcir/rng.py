"""Deterministic, splittable pseudo-random numbers.

The generator is xoshiro256** (Blackman & Vigna), a 256-bit-state 64-bit
generator, seeded through splitmix64.  Both algorithms are fixed here so
datasets are bit-reproducible from a seed alone, independent of numpy's
generator choices.  Independent streams are derived with `split`, which
hashes a label chain into a fresh seed; streams never share state.

Floats use the top 53 bits of each 64-bit word.  Normals come from the
Box-Muller transform on those uniforms.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3


def splitmix64(x: int) -> int:
    """One splitmix64 scramble step: maps a 64-bit value to a 64-bit value."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _hash_label(h: int, label: int | str) -> int:
    """Fold a stream label into a 64-bit hash (FNV-1a over the label bytes)."""
    if isinstance(label, int):
        data = label.to_bytes(8, "little", signed=False) if label >= 0 else (
            (label & _MASK64).to_bytes(8, "little"))
    else:
        data = label.encode("utf-8")
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


class Rng:
    """xoshiro256** stream with splittable sub-streams.

    >>> r = Rng(7)
    >>> r.split("data").uniform() == Rng(7).split("data").uniform()
    True
    """

    __slots__ = ("seed", "_s")

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        s = self.seed
        state = []
        for _ in range(4):
            s = splitmix64(s)
            state.append(s)
        # The all-zero state is invalid for xoshiro; splitmix64 of any seed
        # cannot produce four zero words, so no further guard is needed.
        self._s = state

    def split(self, *labels: int | str) -> "Rng":
        """Derive an independent stream keyed by a label chain."""
        h = splitmix64(self.seed ^ _FNV_OFFSET)
        for label in labels:
            h = splitmix64(_hash_label(h, label))
        return Rng(h)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (s1 * 5) & _MASK64
        result = (((result << 7) | (result >> 57)) & _MASK64) * 9 & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = [s0, s1, s2, s3]
        return result

    def _u64_array(self, n: int) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        out = [0] * n
        for i in range(n):
            r = (s1 * 5) & _MASK64
            out[i] = (((r << 7) | (r >> 57)) & _MASK64) * 9 & _MASK64
            t = (s1 << 17) & _MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = [s0, s1, s2, s3]
        return np.array(out, dtype=np.uint64)

    def uniform(self, shape: int | tuple[int, ...] | None = None) -> float | np.ndarray:
        """Uniform floats in [0, 1) with 53-bit resolution."""
        if shape is None:
            return (self.next_u64() >> 11) * 2.0 ** -53
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self._u64_array(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return u.reshape(shape)

    def normal(self, shape: int | tuple[int, ...] | None = None) -> float | np.ndarray:
        """Standard normals via Box-Muller on consecutive uniform pairs."""
        scalar = shape is None
        shape = (1,) if scalar else ((shape,) if isinstance(shape, int) else tuple(shape))
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u = (self._u64_array(2 * m) >> np.uint64(11)).astype(np.float64)
        u1 = (u[:m] + 1.0) * 2.0 ** -53  # in (0, 1]: keeps log finite
        u2 = u[m:] * 2.0 ** -53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return float(z[0]) if scalar else z.reshape(shape)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound). Modulo reduction; the bias is
        negligible for bounds far below 2**64 and the scheme is fixed."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx, dtype=np.int64)
