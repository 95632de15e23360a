"""Per-round cost generators: stochastic, adaptive, and sign-walk streams.

An :class:`AdversarySpec` describes the generator; ``instantiate`` draws any
frozen randomness (per-machine offsets) and returns an emitter whose
``emit_round`` produces the M costs for one round. Linear emitters keep the
realized heterogeneity exactly constant and point-independent, so the
budget can be asserted as an identity rather than a supremum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import Cost, HuberCost, LinearCost
from .geometry import RngStream, as_vector, sample_unit_sphere

ADVERSARY_KINDS = (
    "stochastic_linear",
    "adaptive_linear",
    "stochastic_huber",
    "rademacher_linear",
)
TARGETING_RULES = ("mean", "per_machine")


class History:
    """Append-only log of played models and emitted costs.

    Adaptive emitters may read models of strictly earlier rounds only; the
    simulator appends each round after every machine has played it.
    """

    def __init__(self, n_machines: int, dim: int, horizon: int):
        self.models = np.zeros((horizon, n_machines, dim))
        self.costs: list[list[Cost]] = []
        self.n_rounds = 0

    def append_round(self, models: np.ndarray, costs: list[Cost]) -> None:
        if self.n_rounds >= self.models.shape[0]:
            raise ValueError("history capacity exceeded")
        self.models[self.n_rounds] = models
        self.costs.append(costs)
        self.n_rounds += 1

    def last_models(self) -> np.ndarray | None:
        if self.n_rounds == 0:
            return None
        return self.models[self.n_rounds - 1]


@dataclass(frozen=True)
class AdversarySpec:
    """Declarative description of a cost-function generator."""

    kind: str
    dim: int
    n_machines: int
    lipschitz: float
    zeta: float = 0.0
    targeting_rule: str = "mean"
    huber_smoothness: float = 1.0
    huber_center_radius: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if self.dim < 1 or self.n_machines < 1:
            raise ValueError("dim and n_machines must be positive")
        if self.lipschitz <= 0:
            raise ValueError("lipschitz bound must be positive")
        if not 0.0 <= self.zeta <= 2.0 * self.lipschitz:
            # Heterogeneity beyond 2G is infeasible for gradients bounded by G.
            raise ValueError("zeta must lie in [0, 2*lipschitz]")
        if self.targeting_rule not in TARGETING_RULES:
            raise ValueError(f"unknown targeting rule {self.targeting_rule!r}")
        if self.kind == "rademacher_linear" and self.zeta != 0.0:
            raise ValueError("the sign-walk stream is shared; zeta must be 0")

    def instantiate(self, rng: RngStream):
        if self.kind == "stochastic_linear":
            return _StochasticLinear(self, rng)
        if self.kind == "adaptive_linear":
            if self.targeting_rule == "mean":
                return _AdaptiveLinearMean(self, rng)
            return _AdaptiveLinearPerMachine(self)
        if self.kind == "stochastic_huber":
            return _StochasticHuber(self, rng)
        return _RademacherLinear(self)


def _paired_offsets(
    n_machines: int, dim: int, zeta: float, rng: RngStream, magnitude_cap: float
):
    """Frozen zero-sum offsets with RMS norm equal to the zeta budget.

    Machines are split into +/- pairs along one random direction (odd fleet
    sizes leave the last machine unshifted and scale the pairs up), so the
    per-round heterogeneity identity holds with the same value at every
    round. Magnitudes are capped so every emitted coefficient stays inside
    the Lipschitz ball.
    """
    offsets = np.zeros((n_machines, dim))
    if n_machines == 1 or zeta == 0.0:
        return offsets, 0.0
    scale = zeta if n_machines % 2 == 0 else zeta * np.sqrt(n_machines / (n_machines - 1))
    scale = min(scale, magnitude_cap)
    direction = sample_unit_sphere(rng, dim)
    for i in range(n_machines - (n_machines % 2)):
        offsets[i] = direction * (scale if i % 2 == 0 else -scale)
    realized = float(np.sqrt(np.mean(np.sum(offsets**2, axis=1))))
    return offsets, realized


class _StochasticLinear:
    """Oblivious linear stream: shared sphere draw plus frozen offsets."""

    is_linear = True

    def __init__(self, spec: AdversarySpec, rng: RngStream):
        self.spec = spec
        self.offsets, self.realized_zeta = _paired_offsets(
            spec.n_machines, spec.dim, spec.zeta, rng, spec.lipschitz
        )
        # Shared radius shrinks by the largest offset so ||beta^m|| <= G always.
        max_offset = float(np.max(np.linalg.norm(self.offsets, axis=1)))
        self.shared_radius = max(spec.lipschitz - max_offset, 0.0)

    def emit_round(self, t: int, history: History, rng: RngStream) -> list[Cost]:
        direction = sample_unit_sphere(rng, self.spec.dim)
        shared = self.shared_radius * direction
        return [
            LinearCost(shared + self.offsets[m], self.spec.lipschitz)
            for m in range(self.spec.n_machines)
        ]


class _AdaptiveLinearMean:
    """Targets the previous round's mean played model, plus frozen offsets."""

    is_linear = True

    def __init__(self, spec: AdversarySpec, rng: RngStream):
        self.spec = spec
        self.offsets, self.realized_zeta = _paired_offsets(
            spec.n_machines, spec.dim, spec.zeta, rng, spec.lipschitz
        )
        max_offset = float(np.max(np.linalg.norm(self.offsets, axis=1)))
        self.shared_radius = max(spec.lipschitz - max_offset, 0.0)

    def emit_round(self, t: int, history: History, rng: RngStream) -> list[Cost]:
        direction = _pursuit_direction(history.last_models(), self.spec.dim)
        shared = self.shared_radius * direction
        return [
            LinearCost(shared + self.offsets[m], self.spec.lipschitz)
            for m in range(self.spec.n_machines)
        ]


class _AdaptiveLinearPerMachine:
    """Targets each machine's own previous model, deviations clamped to zeta.

    Raw coefficients point at the individual machines; their spread around
    the round mean is rescaled so the heterogeneity identity never exceeds
    the budget. With zeta = 0 this collapses to pure mean pursuit, and the
    emitted coefficients are always convex combinations of norm-G vectors.
    """

    is_linear = True

    def __init__(self, spec: AdversarySpec):
        self.spec = spec
        self.realized_zeta = spec.zeta  # upper bound; per-round value may be lower

    def emit_round(self, t: int, history: History, rng: RngStream) -> list[Cost]:
        spec = self.spec
        models = history.last_models()
        raw = np.empty((spec.n_machines, spec.dim))
        for m in range(spec.n_machines):
            target = None if models is None else models[m]
            raw[m] = spec.lipschitz * _pursuit_direction_single(target, spec.dim)
        mean = raw.mean(axis=0)
        deviations = raw - mean
        spread = float(np.sqrt(np.mean(np.sum(deviations**2, axis=1))))
        shrink = 1.0 if spread <= spec.zeta or spread == 0.0 else spec.zeta / spread
        betas = mean + shrink * deviations
        return [LinearCost(betas[m], spec.lipschitz) for m in range(spec.n_machines)]


class _StochasticHuber:
    """Huberized quadratics around a random per-round center.

    Per-machine center shifts are frozen pairs scaled to zeta/(2H); the
    gradient map of a Huber function is H-Lipschitz in its center, so the
    heterogeneity budget holds uniformly in x.
    """

    is_linear = False

    def __init__(self, spec: AdversarySpec, rng: RngStream):
        self.spec = spec
        # A Huber gradient map is H-Lipschitz in its center, so center shifts
        # of RMS zeta/(2H) keep the heterogeneity within budget for every x.
        shift_budget = spec.zeta / (2.0 * spec.huber_smoothness)
        self.center_offsets, shift = _paired_offsets(
            spec.n_machines, spec.dim, shift_budget, rng, np.inf
        )
        self.realized_zeta = 2.0 * spec.huber_smoothness * shift

    def emit_round(self, t: int, history: History, rng: RngStream) -> list[Cost]:
        spec = self.spec
        center = spec.huber_center_radius * sample_unit_sphere(rng, spec.dim)
        return [
            HuberCost(
                center + self.center_offsets[m],
                lipschitz=spec.lipschitz,
                smoothness=spec.huber_smoothness,
            )
            for m in range(spec.n_machines)
        ]


class _RademacherLinear:
    """Shared coefficient (G/sqrt(d)) * uniform signs; the sign-walk stream."""

    is_linear = True

    def __init__(self, spec: AdversarySpec):
        self.spec = spec
        self.realized_zeta = 0.0

    def emit_round(self, t: int, history: History, rng: RngStream) -> list[Cost]:
        spec = self.spec
        beta = (spec.lipschitz / np.sqrt(spec.dim)) * rng.signs(spec.dim)
        cost = LinearCost(beta, spec.lipschitz)
        return [cost] * spec.n_machines


def _pursuit_direction(models: np.ndarray | None, dim: int) -> np.ndarray:
    """Unit direction of the mean played model; first axis when degenerate."""
    if models is None:
        return _basis_vector(dim)
    return _pursuit_direction_single(models.mean(axis=0), dim)


def _pursuit_direction_single(model: np.ndarray | None, dim: int) -> np.ndarray:
    if model is None:
        return _basis_vector(dim)
    n = float(np.linalg.norm(model))
    if n == 0.0:
        return _basis_vector(dim)
    return model / n


def _basis_vector(dim: int) -> np.ndarray:
    e = np.zeros(dim)
    e[0] = 1.0
    return e


def realized_heterogeneity(costs: list[Cost]) -> float:
    """Exact heterogeneity of one round of linear costs.

    For linear costs the deviation of per-machine gradients from the mean
    gradient does not depend on the query point, so the budget can be
    checked as an equality.
    """
    betas = np.stack([c.beta for c in costs])
    mean = betas.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum((betas - mean) ** 2, axis=1))))


def rademacher_expected_walk(horizon: int) -> float:
    """E|sum of `horizon` uniform +/-1 draws| by exhaustive enumeration.

    Enumerates all 2^horizon sign patterns (refused above 20), and is at
    least sqrt(horizon)/2 for every horizon, the inequality the sign-walk
    lower-bound stream relies on.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    if horizon > 20:
        raise ValueError("enumeration over 2^horizon outcomes refused for horizon > 20")
    outcomes = np.arange(1 << horizon, dtype=np.uint32)
    ones = np.bitwise_count(outcomes).astype(np.int64)
    walk = np.abs(horizon - 2 * ones)
    return float(walk.sum()) / float(1 << horizon)


def fstar_of_run(round_costs: list[list[Cost]], x_star) -> float:
    """Average over rounds of the machine-average cost at the comparator."""
    x = as_vector(x_star)
    total = 0.0
    for costs in round_costs:
        total += sum(c.value(x) for c in costs) / len(costs)
    return total / len(round_costs)
