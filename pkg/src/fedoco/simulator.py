"""The round loop binding adversary, learners, and communication.

``run`` executes T = K*R rounds, records every incurred loss at the exact
queried points, and finalizes a :class:`RegretLedger` holding the
best-in-hindsight comparator, the average regret, and consensus
diagnostics. Everything is a deterministic function of the configuration
and its seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adversaries import AdversarySpec, History, fstar_of_run
from .algorithms import (
    ALGORITHMS,
    FedOsgd,
    FedOsgdFirstOrder,
    FedPosgd,
    MachineState,
    NcOgd,
    NcOgdOnePoint,
    NcOgdTwoPoint,
    Schedule,
    communicate,
    schedule_noisy_first_order,
    schedule_ogd,
    schedule_one_point,
    schedule_one_point_headline,
    schedule_smooth_two_point,
    schedule_two_point,
)
from .costs import Cost, LinearCost
from .geometry import RngStream, project_l2_ball

STREAM_ADVERSARY = 0
STREAM_MACHINE_BASE = 1
STREAM_PROBE = 1 << 32

REQUIRED_ORACLE = {
    "nc_ogd": "first_order",
    "nc_ogd_one_point": "one_point",
    "nc_ogd_two_point": "two_point",
    "fedposgd": "one_point",
    "fedosgd": "two_point",
    "fedosgd_first_order": "noisy_first_order",
}

SCHEDULE_NAMES = (
    "default",
    "ogd",
    "one_point",
    "one_point_headline",
    "two_point",
    "noisy_first_order",
    "smooth_two_point",
)


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one experiment."""

    n_machines: int
    local_steps: int
    comm_rounds: int
    dim: int
    lipschitz: float
    radius: float
    algorithm: str
    adversary: AdversarySpec
    zeta: float = 0.0
    schedule: Schedule | str = "default"
    seed: int = 0
    noise_sigma: float = 0.0
    oracle: str | None = None

    @property
    def horizon(self) -> int:
        return self.local_steps * self.comm_rounds


def validate_config(config: RunConfig) -> None:
    if config.n_machines < 1 or config.local_steps < 1 or config.comm_rounds < 1:
        raise ValueError("n_machines, local_steps, and comm_rounds must be positive")
    if config.dim < 1:
        raise ValueError("dim must be positive")
    if config.lipschitz <= 0 or config.radius <= 0:
        raise ValueError("lipschitz and radius must be positive")
    if not 0.0 <= config.zeta <= 2.0 * config.lipschitz:
        raise ValueError("zeta must lie in [0, 2*lipschitz]")
    if config.algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {config.algorithm!r}")
    if config.noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    required = REQUIRED_ORACLE[config.algorithm]
    if config.oracle is not None and config.oracle != required:
        raise ValueError(
            f"algorithm {config.algorithm!r} needs the {required!r} oracle, "
            f"got {config.oracle!r}"
        )
    if isinstance(config.schedule, str) and config.schedule not in SCHEDULE_NAMES:
        raise ValueError(f"unknown schedule {config.schedule!r}")
    adv = config.adversary
    if not hasattr(adv, "instantiate"):
        raise ValueError("adversary must provide an instantiate(rng) method")
    if isinstance(adv, AdversarySpec):
        if adv.dim != config.dim or adv.n_machines != config.n_machines:
            raise ValueError("adversary dimensions disagree with the run configuration")
        if adv.lipschitz != config.lipschitz or adv.zeta != config.zeta:
            raise ValueError("adversary constants disagree with the run configuration")


def resolve_schedule(config: RunConfig) -> Schedule:
    """Turn a schedule name (or explicit Schedule) into concrete constants."""
    if isinstance(config.schedule, Schedule):
        return config.schedule
    name = config.schedule
    if name == "default":
        name = _DEFAULT_SCHEDULE[config.algorithm]
    G, B = config.lipschitz, config.radius
    T, M, K = config.horizon, config.n_machines, config.local_steps
    R, d = config.comm_rounds, config.dim
    if name == "ogd":
        return schedule_ogd(G, B, T)
    if name == "one_point":
        if config.algorithm.startswith("nc_"):
            return schedule_one_point(G, B, T, 1, 1, d, 0.0)
        return schedule_one_point(G, B, T, M, K, d, config.zeta)
    if name == "one_point_headline":
        return schedule_one_point_headline(G, B, T, M, K, d, config.zeta)
    if name == "two_point":
        if config.algorithm.startswith("nc_"):
            return schedule_two_point(G, B, T, 1, 1, d, T)
        return schedule_two_point(G, B, T, M, K, d, R)
    if name == "noisy_first_order":
        return schedule_noisy_first_order(G, B, T, M, K, config.noise_sigma)
    if name == "smooth_two_point":
        smooth = 0.0
        if isinstance(config.adversary, AdversarySpec) and config.adversary.kind == "stochastic_huber":
            smooth = config.adversary.huber_smoothness
        return schedule_smooth_two_point(G, B, T, M, K, R, d, H=smooth, zeta=config.zeta)
    raise ValueError(f"unknown schedule {name!r}")


_DEFAULT_SCHEDULE = {
    "nc_ogd": "ogd",
    "nc_ogd_one_point": "one_point",
    "nc_ogd_two_point": "two_point",
    "fedposgd": "one_point",
    "fedosgd": "two_point",
    "fedosgd_first_order": "noisy_first_order",
}


def make_learner(config: RunConfig, schedule: Schedule):
    alg = config.algorithm
    if alg == "nc_ogd":
        return NcOgd(schedule)
    if alg == "nc_ogd_one_point":
        return NcOgdOnePoint(schedule, config.radius)
    if alg == "nc_ogd_two_point":
        return NcOgdTwoPoint(schedule)
    if alg == "fedposgd":
        return FedPosgd(schedule, config.radius)
    if alg == "fedosgd":
        return FedOsgd(schedule)
    if alg == "fedosgd_first_order":
        return FedOsgdFirstOrder(schedule, config.noise_sigma)
    raise ValueError(f"unknown algorithm {alg!r}")


@dataclass
class RegretLedger:
    """Everything a finished run is accountable for.

    Losses and query points are stored per (round, machine, query), so the
    average regret can be recomputed from scratch by :meth:`audit`.
    """

    config: RunConfig
    eta: float
    delta: float
    losses: np.ndarray
    query_points: np.ndarray
    history: History
    consensus: np.ndarray
    communications: int
    grad_norm_max: float
    x_star: np.ndarray
    comparator_total: float
    fstar: float
    avg_regret: float
    comparator_certified: bool = True
    warnings: list[str] = field(default_factory=list)

    @property
    def consensus_mean(self) -> float:
        return float(self.consensus.mean())

    @property
    def queries_per_round(self) -> int:
        return self.losses.shape[2]

    def audit(self) -> float:
        """Recompute every stored loss and the final regret from scratch.

        Returns the worst absolute discrepancy between the stored numbers
        and an independent second pass over the retained cost functions and
        queried points.
        """
        T, M, q = self.losses.shape
        all_linear = all(
            isinstance(c, LinearCost) for costs in self.history.costs for c in costs
        )
        if all_linear:
            betas = np.empty((T, M, self.query_points.shape[3]))
            for t, costs in enumerate(self.history.costs):
                for m, c in enumerate(costs):
                    betas[t, m] = c.beta
            recomputed = np.einsum("tmd,tmqd->tmq", betas, self.query_points)
            total = float(np.einsum("tmd,d->", betas, self.x_star)) / M
        else:
            recomputed = np.empty_like(self.losses)
            for t in range(T):
                costs = self.history.costs[t]
                for m in range(M):
                    for j in range(q):
                        recomputed[t, m, j] = costs[m].value(self.query_points[t, m, j])
            total = fstar_of_run(self.history.costs, self.x_star) * T
        worst = float(np.max(np.abs(recomputed - self.losses)))
        worst = max(worst, abs(total - self.comparator_total))
        regret = float(recomputed.mean()) - total / T
        worst = max(worst, abs(regret - self.avg_regret))
        return worst

    def to_record(self) -> dict:
        """Flat scalar summary, one ledger row of the CSV/JSON outputs."""
        cfg = self.config
        adversary = (
            cfg.adversary.kind
            if isinstance(cfg.adversary, AdversarySpec)
            else type(cfg.adversary).__name__
        )
        return {
            "algorithm": cfg.algorithm,
            "adversary": adversary,
            "M": cfg.n_machines,
            "K": cfg.local_steps,
            "R": cfg.comm_rounds,
            "T": cfg.horizon,
            "d": cfg.dim,
            "G": cfg.lipschitz,
            "B": cfg.radius,
            "zeta": cfg.zeta,
            "eta": self.eta,
            "delta": self.delta,
            "seed": cfg.seed,
            "avg_regret": self.avg_regret,
            "consensus_mean": self.consensus_mean,
            "fstar": self.fstar,
            "comparator_loss": self.comparator_total,
        }


def run(config: RunConfig) -> RegretLedger:
    """Execute one full experiment and return its finalized ledger."""
    validate_config(config)
    schedule = resolve_schedule(config)
    learner = make_learner(config, schedule)
    M, K, d = config.n_machines, config.local_steps, config.dim
    T = config.horizon
    q = learner.queries_per_round

    adv_rng = RngStream(config.seed, STREAM_ADVERSARY)
    emitter = config.adversary.instantiate(adv_rng)
    states = [
        MachineState(m, np.zeros(d), RngStream(config.seed, STREAM_MACHINE_BASE + m))
        for m in range(M)
    ]
    history = History(M, d, T)
    losses = np.zeros((T, M, q))
    points = np.zeros((T, M, q, d))
    consensus = np.zeros(T)
    centers = np.zeros((M, d))
    communications = 0
    grad_norm_max = 0.0

    # Overflow inside the sum below is exactly the divergence being detected.
    with np.errstate(over="ignore"):
        for t in range(T):
            if M > 1:
                xs = np.stack([s.x for s in states])
                consensus[t] = float(np.mean(np.linalg.norm(xs - xs.mean(axis=0), axis=1)))
            costs = emitter.emit_round(t, history, adv_rng)
            if len(costs) != M:
                raise RuntimeError("adversary emitted the wrong number of costs")
            for m, state in enumerate(states):
                record = learner.step(state, costs[m])
                centers[m] = record.center
                for j in range(q):
                    points[t, m, j] = record.points[j]
                    losses[t, m, j] = record.losses[j]
                if record.grad_norm > grad_norm_max:
                    grad_norm_max = record.grad_norm
                # One reduction detects NaN/Inf entries (and overflow).
                if not math.isfinite(float(np.sum(state.x))):
                    raise RuntimeError(
                        f"non-finite iterate on machine {m} at round {t}; "
                        "the step size is likely too large for this cost stream"
                    )
            history.append_round(centers, costs)
            if learner.communicates and (t + 1) % K == 0:
                communicate(states, t, K)
                communications += 1

    x_star, comparator_total, certified, warnings = _comparator(config, history)
    fstar = comparator_total / T
    avg_regret = float(losses.mean()) - fstar
    return RegretLedger(
        config=config,
        eta=schedule.eta,
        delta=schedule.delta,
        losses=losses,
        query_points=points,
        history=history,
        consensus=consensus,
        communications=communications,
        grad_norm_max=grad_norm_max,
        x_star=x_star,
        comparator_total=comparator_total,
        fstar=fstar,
        avg_regret=avg_regret,
        comparator_certified=certified,
        warnings=warnings,
    )


def _comparator(config: RunConfig, history: History):
    all_linear = all(
        isinstance(c, LinearCost) for costs in history.costs for c in costs
    )
    warnings: list[str] = []
    if all_linear:
        x_star = comparator_linear(history.costs, config.radius)
        certified = True
    else:
        x_star, certified = comparator_convex(
            [c for costs in history.costs for c in costs],
            config.radius,
            probe_rng=RngStream(config.seed, STREAM_PROBE),
        )
        if not certified:
            warnings.append("convex comparator terminated without certification")
    total = fstar_of_run(history.costs, x_star) * len(history.costs)
    return x_star, total, certified, warnings


def comparator_linear(round_costs: list[list[Cost]], radius: float) -> np.ndarray:
    """Closed-form hindsight comparator for a purely linear stream.

    Minimizing <S, x> over the ball gives -radius * S/||S|| for the summed
    coefficient vector S (zero stays at the origin).
    """
    total = None
    for costs in round_costs:
        for c in costs:
            if not isinstance(c, LinearCost):
                raise ValueError("comparator_linear requires linear costs only")
            total = c.beta.copy() if total is None else total + c.beta
    if total is None:
        raise ValueError("no costs to minimize")
    norm = float(np.linalg.norm(total))
    if norm == 0.0:
        return np.zeros_like(total)
    return -radius * total / norm


def comparator_convex(
    costs: list[Cost],
    radius: float,
    tol: float | None = None,
    max_iters: int = 100_000,
    probe_rng: RngStream | None = None,
    n_probes: int = 1000,
) -> tuple[np.ndarray, bool]:
    """Projected-gradient minimizer of the averaged cost over the ball.

    Smooth streams use the constant step 1/H; otherwise steps diminish as
    radius/(G sqrt(k)). Terminates when the projected-gradient norm drops
    below ``tol`` (default 1e-8 * G * radius) or at the iteration cap, then
    certifies the result against random feasible probes. Returns the point
    and whether it was certified.
    """
    if not costs:
        raise ValueError("no costs to minimize")
    d = costs[0].dim
    G = max(c.lipschitz for c in costs)
    if tol is None:
        tol = 1e-8 * G * radius
    smooth = all(math.isfinite(c.smoothness) for c in costs)
    H = max((c.smoothness for c in costs), default=0.0)

    def avg_gradient(x: np.ndarray) -> np.ndarray:
        g = np.zeros(d)
        for c in costs:
            g += c.gradient(x)
        return g / len(costs)

    def avg_value(x: np.ndarray) -> float:
        return sum(c.value(x) for c in costs) / len(costs)

    x = np.zeros(d)
    converged = False
    for k in range(1, max_iters + 1):
        step = 1.0 / H if smooth and H > 0 else radius / (G * math.sqrt(k))
        x_new = project_l2_ball(x - step * avg_gradient(x), radius)
        moved = float(np.linalg.norm(x_new - x)) / step
        x = x_new
        if moved <= tol:
            converged = True
            break

    certified = converged
    if probe_rng is not None:
        best = avg_value(x)
        for _ in range(n_probes):
            y = probe_rng.normal(d)
            scale = radius * probe_rng.generator.uniform() ** (1.0 / d)
            y *= scale / max(float(np.linalg.norm(y)), 1e-300)
            if avg_value(y) < best - tol:
                certified = False
                x = project_l2_ball(y, radius)
                best = avg_value(x)
    return x, certified


def consensus_series(ledger: RegretLedger) -> np.ndarray:
    """Per-round mean distance of machine iterates from their average.

    Measured at round start, so entries are exactly zero right after every
    averaging step, and the whole series is zero for a single machine.
    """
    return ledger.consensus


def per_machine_average_regrets(ledger: RegretLedger) -> np.ndarray:
    """Average regret of each machine against its own hindsight comparator.

    Averaged over machines this can only exceed the shared-comparator
    average regret, since each machine's own minimizer is at least as good
    for it as the shared one.
    """
    T, M, q = ledger.losses.shape
    radius = ledger.config.radius
    out = np.zeros(M)
    for m in range(M):
        own = [[ledger.history.costs[t][m]] for t in range(T)]
        try:
            x_m = comparator_linear(own, radius)
        except ValueError:
            x_m, _ = comparator_convex([c[0] for c in own], radius)
        own_total = fstar_of_run(own, x_m)
        out[m] = float(ledger.losses[:, m, :].mean()) - own_total
    return out
