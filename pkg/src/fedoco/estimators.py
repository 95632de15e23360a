"""Zeroth-order gradient estimators built from one or two value queries.

Both estimators perturb along a fresh uniform sphere direction and record
the exact points at which the cost was evaluated; the simulator charges
regret at those recorded points and nowhere else.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import Cost, check_point
from .geometry import RngStream, sample_unit_sphere


@dataclass(frozen=True)
class ZoQuery:
    """Outcome of one zeroth-order probe: points queried, values, estimate."""

    center: np.ndarray
    direction: np.ndarray
    delta: float
    points: tuple[np.ndarray, ...]
    values: tuple[float, ...]
    estimate: np.ndarray


def one_point_estimate(
    cost: Cost,
    w,
    delta: float,
    rng: RngStream,
    direction: np.ndarray | None = None,
) -> ZoQuery:
    """Single-query estimate g = (d/delta) f(w + delta u) u.

    Unbiased for linear costs. The variance guarantee needs ``w`` inside
    the feasible ball, which the caller ensures by projecting first.
    ``direction`` overrides the random draw; tests use it to pin u.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    w = check_point(w, cost.dim)
    u = sample_unit_sphere(rng, cost.dim) if direction is None else check_point(direction, cost.dim)
    point = w + delta * u
    val = cost.value(point)
    g = (cost.dim / delta) * val * u
    return ZoQuery(w, u, delta, (point,), (val,), g)


def two_point_estimate(
    cost: Cost,
    x,
    delta: float,
    rng: RngStream,
    direction: np.ndarray | None = None,
) -> ZoQuery:
    """Symmetric estimate g = (d/2delta)(f(x+delta u) - f(x-delta u)) u.

    Unbiased for the sphere-smoothed cost; exactly unbiased for linear
    costs, with pointwise norm at most d*G by Lipschitzness.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = check_point(x, cost.dim)
    u = sample_unit_sphere(rng, cost.dim) if direction is None else check_point(direction, cost.dim)
    p1 = x + delta * u
    p2 = x - delta * u
    v1 = cost.value(p1)
    v2 = cost.value(p2)
    g = (cost.dim / (2.0 * delta)) * (v1 - v2) * u
    return ZoQuery(x, u, delta, (p1, p2), (v1, v2), g)


def smoothed_value(
    cost: Cost,
    x,
    delta: float,
    n_samples: int,
    rng: RngStream,
) -> float:
    """Monte-Carlo estimate of the sphere-smoothed value E_u f(x + delta u)."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    x = check_point(x, cost.dim)
    total = 0.0
    for _ in range(n_samples):
        u = sample_unit_sphere(rng, cost.dim)
        total += cost.value(x + delta * u)
    return total / n_samples
