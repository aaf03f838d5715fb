"""Dense float64 vector primitives and seeded random streams.

All arithmetic is double precision; vectors are one-dimensional numpy
arrays validated to be finite on entry. Nothing here mutates its inputs,
so values can be shared freely across concurrent runs. A ``RngStream`` is
single-owner: advance it from one task only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import EvaluationError

Vector = NDArray[np.float64]


def as_vector(values, *, name: str = "vector") -> Vector:
    """Coerce to a finite 1-D float64 array, copying if needed."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def check_same_dim(x: Vector, z: Vector) -> None:
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {z.shape[0]}")


def bregman_euclid(x: Vector, z: Vector) -> float:
    """Euclidean Bregman distance 0.5*||x - z||^2.

    This is the divergence generated by 0.5*||.||^2; it is nonnegative and
    vanishes exactly when x == z.
    """
    check_same_dim(x, z)
    d = x - z
    return 0.5 * float(d @ d)


def project_ball(x: Vector, center: Vector, radius: float) -> Vector:
    """Euclidean projection of x onto the closed ball B(center, radius).

    Points already inside (or on) the ball are returned unchanged.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    check_same_dim(x, center)
    offset = x - center
    dist = float(np.linalg.norm(offset))
    if dist <= radius:
        return x
    return center + (radius / dist) * offset


def default_fd_step(x: Vector) -> float:
    """Central-difference step 1e-6*(1 + ||x||_inf), balancing truncation
    against cancellation at double precision."""
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    return 1e-6 * (1.0 + scale)


def finite_diff_grad(f, x: Vector, h: float | None = None) -> Vector:
    """Central-difference gradient of a scalar function.

    Exact on quadratics; O(h^2) truncation error otherwise. Raises
    EvaluationError naming the coordinate if f returns a non-finite value.
    """
    if h is None:
        h = default_fd_step(x)
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(
                f"non-finite objective value while differencing coordinate {i}",
                coordinate=i)
        g[i] = (fp - fm) / (2.0 * h)
    return g


@dataclass(eq=False)
class RngStream:
    """Counter-based random stream addressed by (seed, stream_id).

    Backed by numpy's Philox generator with key = (seed, stream_id), so an
    identical pair reproduces the identical draw sequence on any platform,
    and distinct stream ids give statistically independent streams.
    """

    seed: int
    stream_id: int = 0
    gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        key = np.array([self.seed % 2**64, self.stream_id % 2**64], dtype=np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def standard_normal(self, size=None) -> np.ndarray:
        return self.gen.standard_normal(size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self.gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self.gen.integers(low, high, size=size)

    def random(self) -> float:
        return float(self.gen.random())

    @property
    def key(self) -> tuple[int, int]:
        return (self.seed, self.stream_id)
