"""Dense tensors and seeded randomness.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. This module adds the few checked primitives the rest of the package
relies on, and a small, frozen pseudo-random generator.

The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit state that
advances by the golden-gamma constant ``0x9E3779B97F4A7C15`` per draw, with
the output mixed by two xor-shift-multiply rounds. Because output ``k`` is a
pure function of ``seed + k * gamma``, blocks of draws vectorize exactly and
produce the same bits on every platform. Uniform doubles take the top 53
bits; normals use the Box-Muller transform on consecutive uniform pairs.
"""

from __future__ import annotations

import math
from typing import Literal, Sequence

import numpy as np

from adnet.errors import DimensionError, ValidationError

DTYPE = np.float64

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def as_tensor(x, shape: Sequence[int] | None = None) -> np.ndarray:
    """Return ``x`` as a contiguous float64 array, optionally reshaped."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise DimensionError(f"dimension sizes must be positive, got {shape}")
        if math.prod(shape) != arr.size:
            raise DimensionError(f"cannot view {arr.size} values as shape {shape}")
        arr = arr.reshape(shape)
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def elementwise(a: np.ndarray, b: np.ndarray, op: Literal["add", "sub", "mul"]) -> np.ndarray:
    if a.shape != b.shape:
        raise DimensionError(f"elementwise shape mismatch: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValidationError(f"unknown elementwise op {op!r}")


class Rng:
    """SplitMix64 stream. Single owner; not thread-safe."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def __repr__(self) -> str:
        return f"Rng(state={self.state:#018x})"

    def next_u64(self, n: int) -> np.ndarray:
        n = int(n)
        base = np.uint64(self.state)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = base + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK64
        return z

    def spawn(self) -> "Rng":
        """Independent child stream seeded from this one."""
        return Rng(int(self.next_u64(1)[0]))

    def uniform(self, shape=()) -> np.ndarray | float:
        """Uniform draws on [0, 1)."""
        n = math.prod(shape) if shape != () else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(DTYPE) * (1.0 / 9007199254740992.0)
        return float(u[0]) if shape == () else u.reshape(shape)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValidationError("below() needs n >= 1")
        return min(int(self.uniform() * n), n - 1)

    def shuffle_indices(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of ``range(n)``; one draw per swap, high index first."""
        idx = list(range(n))
        if n > 1:
            u = self.uniform((n - 1,))
            for k, i in enumerate(range(n - 1, 0, -1)):
                j = min(int(u[k] * (i + 1)), i)
                idx[i], idx[j] = idx[j], idx[i]
        return np.asarray(idx, dtype=np.int64)


def rng_normal(rng: Rng, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    """Gaussian tensor via Box-Muller; consumes 2*ceil(n/2) uniform draws."""
    if std < 0:
        raise ValidationError(f"std must be non-negative, got {std}")
    shape = tuple(int(s) for s in shape)
    n = math.prod(shape)
    pairs = (n + 1) // 2
    u = rng.uniform((pairs, 2))
    radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1).reshape(-1)[:n]
    if std == 0:
        return np.full(shape, float(mean), dtype=DTYPE)
    return (mean + std * z).reshape(shape)
