"""Vector geometry and seeded randomness shared by every other module.

Everything is 64-bit floating point. Random draws come from counter-based
Philox streams keyed by ``(seed, stream_id)``, so a given key replays the
identical sequence no matter how runs are scheduled across processes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass
class RngStream:
    """One independently seeded draw stream.

    Identical ``(seed, stream_id)`` pairs replay identical sequences, and
    distinct stream ids are statistically independent, so each simulated
    machine (and the adversary) can own its randomness without any shared
    mutable state. A stream must never be used concurrently from two
    threads; hand it off whole instead.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        key = np.array(
            [self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64
        )
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def signs(self, size=None):
        """Uniform +/-1 draws."""
        return self.generator.integers(0, 2, size=size) * 2 - 1


def as_vector(x, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array, optionally checking its length."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def project_l2_ball(x, radius: float) -> np.ndarray:
    """Euclidean projection onto the centered L2 ball of the given radius.

    Interior points are returned unchanged, so projecting twice is
    bit-identical to projecting once.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    v = as_vector(x)
    n = float(np.linalg.norm(v))
    if n <= radius:
        return v
    y = v * (radius / n)
    # One rounding can leave the norm an ulp above the radius; rescale until
    # the result is genuinely inside so the projection is idempotent.
    ny = float(np.linalg.norm(y))
    while ny > radius:
        y = y * (radius / ny)
        ny = float(np.linalg.norm(y))
    return y


def sample_unit_sphere(rng: RngStream, dim: int) -> np.ndarray:
    """Uniform draw from the unit sphere, via a normalized Gaussian vector."""
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    while True:
        g = rng.normal(dim)
        n = math.sqrt(g @ g)
        # Zero draw has probability zero; guard against it anyway.
        if n > 0.0 and math.isfinite(n):
            return g / n


def lazy_potential(x_star, y, radius: float) -> float:
    """Potential d(x*, y) for iterates kept in unprojected space.

    Equals ``||x*||^2/2 - ||yh||^2/2 - <y, x* - yh>`` where ``yh`` is the
    ball projection of ``y``. For any feasible comparator it dominates
    ``||x* - yh||^2 / 2``, which is what makes lazy projection analyzable.
    """
    xs = as_vector(x_star, name="x_star")
    yv = as_vector(y, dim=xs.shape[0], name="y")
    if float(np.linalg.norm(xs)) > radius * (1.0 + 1e-12):
        raise ValueError("x_star lies outside the comparator ball")
    yh = project_l2_ball(yv, radius)
    return float(0.5 * (xs @ xs) - 0.5 * (yh @ yh) - yv @ (xs - yh))
