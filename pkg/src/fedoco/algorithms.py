"""Learners and their prescribed step-size / smoothing schedules.

The three core learners are plain online gradient descent (first-order,
never communicates), the one-point-feedback learner with lazy projection,
and the two-point-feedback learner with periodic averaging. A noisy
first-order variant of the averaging learner isolates the estimator's
contribution from the communication structure.

Schedules are pure functions of the problem constants. Terms guarded by an
indicator that is off, or whose denominator vanishes, are treated as +inf
inside a min (and branches that evaluate to +inf inside a max drop the
whole bracket), so degenerate configurations never divide by zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costs import Cost, noisy_gradient
from .estimators import one_point_estimate, two_point_estimate
from .geometry import RngStream, project_l2_ball

ALGORITHMS = (
    "nc_ogd",
    "nc_ogd_one_point",
    "nc_ogd_two_point",
    "fedposgd",
    "fedosgd",
    "fedosgd_first_order",
)


@dataclass(frozen=True)
class Schedule:
    """Constant step size and smoothing radius, tagged with their source."""

    eta: float
    delta: float
    source: str
    note: str = ""

    def __post_init__(self) -> None:
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError("eta must be positive and finite")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")


def _div(num: float, den: float) -> float:
    """Ratio with vanishing denominators mapped to +inf (dropped from mins)."""
    return num / den if den > 0 else math.inf


def _min_with_note(terms: dict[str, float]) -> tuple[float, str]:
    name = min(terms, key=terms.get)
    return terms[name], name


def schedule_ogd(G: float, B: float, T: int) -> Schedule:
    """Classic serial step size B/(G sqrt(T)) for plain first-order descent."""
    _check_positive(G=G, B=B, T=T)
    return Schedule(eta=B / (G * math.sqrt(T)), delta=0.0, source="manual", note="serial ogd")


def schedule_one_point(
    G: float, B: float, T: int, M: int, K: int, d: int, zeta: float
) -> Schedule:
    """Schedule for the one-point learner, in its noise-parameterized form.

    Uses sigma = 2dG, the worst-case norm of the one-point estimate at the
    projected query with delta = B; that form is dimensionally consistent,
    unlike the raw headline expression (see ``schedule_one_point_headline``).
    """
    _check_positive(G=G, B=B, T=T, M=M, K=K, d=d)
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    sigma = 2.0 * d * G
    terms = {"unit": 1.0, "variance": G * math.sqrt(M) / sigma}
    if K > 1:
        terms["drift"] = math.sqrt(G) / (math.sqrt(sigma) * K**0.25)
        terms["heterogeneity"] = _div(math.sqrt(G), math.sqrt(zeta * K))
    m, name = _min_with_note(terms)
    return Schedule(
        eta=B / (G * math.sqrt(T)) * m,
        delta=B,
        source="one_point",
        note=f"active term: {name}",
    )


def schedule_one_point_headline(
    G: float, B: float, T: int, M: int, K: int, d: int, zeta: float
) -> Schedule:
    """Headline variant of the one-point schedule, kept for exact comparisons."""
    _check_positive(G=G, B=B, T=T, M=M, K=K, d=d)
    terms = {"unit": 1.0, "variance": math.sqrt(M) / (d * B)}
    if K > 1:
        terms["drift"] = 1.0 / (math.sqrt(d * B) * K**0.25)
        terms["heterogeneity"] = _div(math.sqrt(G), math.sqrt(zeta * K))
    m, name = _min_with_note(terms)
    return Schedule(
        eta=B / (G * math.sqrt(T)) * m,
        delta=B,
        source="manual",
        note=f"headline one-point form, active term: {name}",
    )


def schedule_two_point(
    G: float, B: float, T: int, M: int, K: int, d: int, R: int
) -> Schedule:
    """Schedule for the two-point learner against Lipschitz adversaries."""
    _check_positive(G=G, B=B, T=T, M=M, K=K, d=d, R=R)
    if T != K * R:
        raise ValueError("horizon must satisfy T = K * R")
    terms = {"unit": 1.0, "variance": math.sqrt(M) / math.sqrt(d)}
    if K > 1:
        terms["drift"] = 1.0 / (math.sqrt(K) * d**0.25)
    m, name = _min_with_note(terms)
    eta = B / (G * math.sqrt(T)) * m
    delta = (B * d**0.25 / math.sqrt(R)) * (1.0 + d**0.25 / math.sqrt(M * K))
    return Schedule(eta=eta, delta=delta, source="two_point", note=f"active term: {name}")


def schedule_noisy_first_order(
    G: float, B: float, T: int, M: int, K: int, sigma: float
) -> Schedule:
    """Schedule for the averaging learner driven by a noisy gradient oracle."""
    _check_positive(G=G, B=B, T=T, M=M, K=K)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    terms = {"unit": 1.0, "variance": _div(G * math.sqrt(M), sigma)}
    if K > 1:
        terms["drift"] = _div(math.sqrt(G), math.sqrt(sigma * K))
        terms["local"] = 1.0 / math.sqrt(K)
    m, name = _min_with_note(terms)
    return Schedule(
        eta=B / (G * math.sqrt(T)) * m,
        delta=0.0,
        source="noisy_first_order",
        note=f"active term: {name}",
    )


def eta_smooth_case(
    G: float,
    B: float,
    T: int,
    M: int,
    K: int,
    R: int,
    H: float,
    F_star: float | None,
    sigma: float,
    zeta: float,
) -> tuple[float, str]:
    """Step size for the smooth-case analysis, evaluated exactly as printed.

    H = 0 drops the curvature cap and the curvature-dependent min terms
    (their denominators vanish); an unknown F_star drops its max branch.
    Returns the step size and a note naming the active branch.
    """
    _check_positive(G=G, B=B, T=T, M=M, K=K, R=R)
    if H < 0:
        raise ValueError("H must be nonnegative")
    if zeta < 0 or sigma < 0:
        raise ValueError("sigma and zeta must be nonnegative")
    terms: dict[str, float] = {}
    if H > 0:
        terms["curvature_cap"] = 1.0 / (2.0 * H)
    terms["variance"] = _div(B * math.sqrt(M), sigma * math.sqrt(T))
    comparator = [B / (G * math.sqrt(T))]
    if H > 0 and F_star is not None and F_star > 0:
        comparator.append(B / math.sqrt(H * F_star * T))
    terms["comparator"] = max(comparator)
    if K > 1:
        smooth_branch = min(
            _div(B ** (2 / 3), H ** (1 / 3) * sigma ** (2 / 3) * K ** (2 / 3) * R ** (1 / 3)),
            _div(B ** (2 / 3), H ** (1 / 3) * zeta ** (2 / 3) * K * R ** (1 / 3)),
            _div(B, K**0.75 * math.sqrt(zeta * sigma * R)),
            _div(B, zeta * K * math.sqrt(R)),
        )
        lipschitz_branch = min(
            _div(B, K**0.75 * math.sqrt(G * sigma * R)),
            _div(B, K * math.sqrt(zeta * G * R)),
        )
        terms["drift"] = max(smooth_branch, lipschitz_branch)
    finite = {k: v for k, v in terms.items() if math.isfinite(v)}
    if not finite:
        raise ValueError("every step-size term degenerated; check the inputs")
    return _min_with_note(finite)


def regret_bound_smooth_case(
    G: float,
    B: float,
    T: int,
    M: int,
    K: int,
    R: int,
    H: float,
    F_star: float | None,
    sigma: float,
    zeta: float,
) -> float:
    """The smooth-case average-regret bound, used to size the probe radius."""
    bound = H * B * B / T + sigma * B / math.sqrt(M * T)
    comparator = [G * B / math.sqrt(T)]
    if H > 0 and F_star is not None and F_star > 0:
        comparator.append(math.sqrt(H * F_star) * B / math.sqrt(T))
    bound += min(comparator)
    if K > 1:
        smooth_branch = (
            H ** (1 / 3) * B ** (4 / 3) * sigma ** (2 / 3) / (K ** (1 / 3) * R ** (2 / 3))
            + H ** (1 / 3) * B ** (4 / 3) * zeta ** (2 / 3) / R ** (2 / 3)
            + math.sqrt(zeta * sigma) * B / (K**0.25 * math.sqrt(R))
            + zeta * B / math.sqrt(R)
        )
        lipschitz_branch = math.sqrt(G * sigma) * B / (K**0.25 * math.sqrt(R)) + math.sqrt(
            G * zeta
        ) * B / math.sqrt(R)
        bound += min(smooth_branch, lipschitz_branch)
    return bound


def schedule_smooth_two_point(
    G: float,
    B: float,
    T: int,
    M: int,
    K: int,
    R: int,
    d: int,
    H: float = 0.0,
    F_star: float | None = None,
    zeta: float = 0.0,
) -> Schedule:
    """Smooth-case schedule for the two-point learner.

    Substitutes the two-point estimator's noise level sigma = G*sqrt(d) and
    picks the smoothing radius so the smoothing error G*delta matches the
    resulting regret bound. With H = 0 this is the linear-case schedule.
    """
    sigma = G * math.sqrt(d)
    eta, note = eta_smooth_case(G, B, T, M, K, R, H, F_star, sigma, zeta)
    bound = regret_bound_smooth_case(G, B, T, M, K, R, H, F_star, sigma, zeta)
    return Schedule(eta=eta, delta=bound / G, source="smooth_two_point", note=f"active term: {note}")


def _check_positive(**values: float) -> None:
    for name, v in values.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


# ---------------------------------------------------------------------------
# Learners


@dataclass
class MachineState:
    """Mutable per-machine state: the iterate and the machine's own stream."""

    machine_id: int
    x: np.ndarray
    rng: RngStream


@dataclass(frozen=True)
class StepRecord:
    """What one machine did in one round, as charged by the regret ledger."""

    center: np.ndarray
    points: tuple[np.ndarray, ...]
    losses: tuple[float, ...]
    grad_norm: float


class NcOgd:
    """Independent online gradient descent; no communication, ever."""

    communicates = False
    queries_per_round = 1
    oracle = "first_order"

    def __init__(self, schedule: Schedule):
        self.eta = schedule.eta

    def step(self, state: MachineState, cost: Cost) -> StepRecord:
        x = state.x
        loss = cost.value(x)
        g = cost.gradient(x)
        state.x = x - self.eta * g
        return StepRecord(x, (x,), (loss,), math.sqrt(g @ g))


class NcOgdOnePoint:
    """Non-collaborative baseline with a one-point estimate and projection.

    The iterate is re-projected after every update, so the value query at
    x + delta*u always starts from a feasible point.
    """

    communicates = False
    queries_per_round = 1
    oracle = "one_point"

    def __init__(self, schedule: Schedule, radius: float):
        self.eta = schedule.eta
        self.delta = schedule.delta
        self.radius = radius

    def step(self, state: MachineState, cost: Cost) -> StepRecord:
        x = state.x
        probe = one_point_estimate(cost, x, self.delta, state.rng)
        state.x = project_l2_ball(x - self.eta * probe.estimate, self.radius)
        g = probe.estimate
        return StepRecord(x, probe.points, probe.values, math.sqrt(g @ g))


class NcOgdTwoPoint:
    """Non-collaborative baseline with the symmetric two-point estimate."""

    communicates = False
    queries_per_round = 2
    oracle = "two_point"

    def __init__(self, schedule: Schedule):
        self.eta = schedule.eta
        self.delta = schedule.delta

    def step(self, state: MachineState, cost: Cost) -> StepRecord:
        x = state.x
        probe = two_point_estimate(cost, x, self.delta, state.rng)
        state.x = x - self.eta * probe.estimate
        g = probe.estimate
        return StepRecord(x, probe.points, probe.values, math.sqrt(g @ g))


class FedPosgd:
    """One-point-feedback learner with lazy projection.

    The iterate lives in unprojected space; projection happens only to form
    the query point, and the loss is charged at that perturbed query.
    """

    communicates = True
    queries_per_round = 1
    oracle = "one_point"

    def __init__(self, schedule: Schedule, radius: float):
        self.eta = schedule.eta
        self.delta = schedule.delta
        self.radius = radius

    def step(self, state: MachineState, cost: Cost) -> StepRecord:
        w = project_l2_ball(state.x, self.radius)
        probe = one_point_estimate(cost, w, self.delta, state.rng)
        state.x = state.x - self.eta * probe.estimate
        g = probe.estimate
        return StepRecord(w, probe.points, probe.values, math.sqrt(g @ g))


class FedOsgd:
    """Two-point-feedback learner with periodic averaging; no projection."""

    communicates = True
    queries_per_round = 2
    oracle = "two_point"

    def __init__(self, schedule: Schedule):
        self.eta = schedule.eta
        self.delta = schedule.delta

    def step(self, state: MachineState, cost: Cost) -> StepRecord:
        x = state.x
        probe = two_point_estimate(cost, x, self.delta, state.rng)
        state.x = x - self.eta * probe.estimate
        g = probe.estimate
        return StepRecord(x, probe.points, probe.values, math.sqrt(g @ g))


class FedOsgdFirstOrder:
    """Averaging learner driven by a noisy gradient oracle of variance sigma^2.

    Same communication and update structure as the two-point learner; used
    to reproduce the noisy-first-order guarantees and to isolate what the
    value-query estimator adds on top of them.
    """

    communicates = True
    queries_per_round = 1
    oracle = "noisy_first_order"

    def __init__(self, schedule: Schedule, sigma: float):
        self.eta = schedule.eta
        self.sigma = sigma

    def step(self, state: MachineState, cost: Cost) -> StepRecord:
        x = state.x
        loss = cost.value(x)
        g = noisy_gradient(cost, x, self.sigma, state.rng)
        state.x = x - self.eta * g
        return StepRecord(x, (x,), (loss,), math.sqrt(g @ g))


def communicate(states: list[MachineState], t: int, K: int) -> None:
    """Replace every iterate with the mean of the post-update iterates.

    Must fire exactly when (t+1) mod K == 0; any other invocation is an
    internal scheduling bug, not a user error.
    """
    if (t + 1) % K != 0:
        raise RuntimeError(f"communication invoked off-schedule at round {t} with K={K}")
    mean = np.mean([s.x for s in states], axis=0)
    for s in states:
        s.x = mean.copy()
