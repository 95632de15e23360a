"""Cost functions and the first-order oracles over them.

Three families cover the simulated function classes: linear costs with a
bounded coefficient vector, huberized quadratics (the minimal construction
that is simultaneously Lipschitz, smooth, and convex on all of R^d), and
caller-supplied closures whose declared constants are spot-checked rather
than trusted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import RngStream, as_vector

_NORM_SLACK = 1.0 + 1e-9


def check_point(x, dim: int) -> np.ndarray:
    """Cheap per-call query check: right shape, no data-scan.

    Finiteness is enforced where vectors enter the system (construction,
    the simulator's per-round iterate check), not on every evaluation.
    """
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != dim:
        raise ValueError(f"point has shape {v.shape}, expected ({dim},)")
    return v


@dataclass(frozen=True)
class LinearCost:
    """f(x) = <beta, x> with ||beta|| <= lipschitz."""

    beta: np.ndarray
    lipschitz: float

    def __post_init__(self) -> None:
        b = as_vector(self.beta, name="beta")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)
        if self.lipschitz <= 0:
            raise ValueError("lipschitz bound must be positive")
        if math.sqrt(b @ b) > self.lipschitz * _NORM_SLACK:
            raise ValueError("||beta|| exceeds the declared Lipschitz bound")

    @property
    def smoothness(self) -> float:
        return 0.0

    @property
    def dim(self) -> int:
        return self.beta.shape[0]

    def value(self, x) -> float:
        return float(self.beta @ check_point(x, self.dim))

    def gradient(self, x) -> np.ndarray:
        check_point(x, self.dim)
        return np.array(self.beta)


@dataclass(frozen=True)
class HuberCost:
    """Huberized quadratic around ``center``.

    Quadratic ``(H/2)||x-c||^2`` within radius G/H of the center and linear
    ``G||x-c|| - G^2/(2H)`` outside, so the function is G-Lipschitz,
    H-smooth, and convex everywhere. The kink itself is evaluated on the
    quadratic branch; both branches agree there in value and gradient.
    """

    center: np.ndarray
    lipschitz: float
    smoothness: float

    def __post_init__(self) -> None:
        c = as_vector(self.center, name="center")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if self.lipschitz <= 0:
            raise ValueError("lipschitz bound must be positive")
        if self.smoothness <= 0:
            raise ValueError("smoothness bound must be positive")

    @property
    def radius(self) -> float:
        return self.lipschitz / self.smoothness

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def value(self, x) -> float:
        g, h = self.lipschitz, self.smoothness
        diff = check_point(x, self.dim) - self.center
        r = math.sqrt(diff @ diff)
        if r <= self.radius:
            return 0.5 * h * r * r
        return g * r - g * g / (2.0 * h)

    def gradient(self, x) -> np.ndarray:
        g, h = self.lipschitz, self.smoothness
        diff = check_point(x, self.dim) - self.center
        r = math.sqrt(diff @ diff)
        if r <= self.radius:
            return h * diff
        return (g / r) * diff


@dataclass(frozen=True)
class CustomCost:
    """Caller-supplied value/gradient closures with declared constants."""

    value_fn: Callable[[np.ndarray], float]
    gradient_fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    lipschitz: float
    smoothness: float = np.inf

    def value(self, x) -> float:
        return float(self.value_fn(check_point(x, self.dim)))

    def gradient(self, x) -> np.ndarray:
        return as_vector(self.gradient_fn(check_point(x, self.dim)), dim=self.dim)


Cost = LinearCost | HuberCost | CustomCost


def noisy_gradient(cost: Cost, x, sigma: float, rng: RngStream) -> np.ndarray:
    """Exact gradient plus isotropic Gaussian noise of total variance sigma^2."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    g = cost.gradient(x)
    if sigma == 0:
        return g
    return g + (sigma / np.sqrt(cost.dim)) * rng.normal(cost.dim)


def spot_check_cost(
    cost: Cost,
    radius: float,
    rng: RngStream,
    n_pairs: int = 256,
) -> None:
    """Probe a cost's declared class membership on random pairs.

    Checks the Lipschitz bound, the smoothness bound when finite, and
    midpoint convexity on pairs drawn from the ball of the given radius.
    Raises ValueError on the first violation. Used for CustomCost, whose
    constants are asserted by the caller rather than by construction.
    """
    for _ in range(n_pairs):
        x = rng.normal(cost.dim)
        y = rng.normal(cost.dim)
        x *= radius * rng.generator.uniform() / max(np.linalg.norm(x), 1e-300)
        y *= radius * rng.generator.uniform() / max(np.linalg.norm(y), 1e-300)
        gap = float(np.linalg.norm(x - y))
        if abs(cost.value(x) - cost.value(y)) > cost.lipschitz * gap * _NORM_SLACK + 1e-12:
            raise ValueError("cost violates its declared Lipschitz bound")
        if np.isfinite(cost.smoothness):
            grad_gap = float(np.linalg.norm(cost.gradient(x) - cost.gradient(y)))
            if grad_gap > cost.smoothness * gap * _NORM_SLACK + 1e-12:
                raise ValueError("cost violates its declared smoothness bound")
        mid = cost.value(0.5 * (x + y))
        if mid > 0.5 * cost.value(x) + 0.5 * cost.value(y) + 1e-12:
            raise ValueError("cost violates convexity")
