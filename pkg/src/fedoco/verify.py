"""Statistical oracle suite behind the ``verify`` subcommand.

Every check uses fixed seeds, states the bound it enforces, and reports the
observed value, so a failure identifies the broken contract directly. The
full suite is sized to finish within a few minutes on one core.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .adversaries import AdversarySpec, rademacher_expected_walk
from .costs import LinearCost
from .estimators import one_point_estimate, two_point_estimate
from .geometry import RngStream, lazy_potential, project_l2_ball, sample_unit_sphere
from .simulator import RunConfig, resolve_schedule, run

VERIFY_SEED = 2024


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    bound: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{status} {self.name}: observed={self.observed:.6g} bound={self.bound:.6g}{extra}"


def check_sphere_moments(dim: int, n_samples: int = 1_000_000) -> list[CheckResult]:
    """Coordinate means near zero and second moment near I/d."""
    rng = RngStream(VERIFY_SEED, 10 + dim)
    mean = np.zeros(dim)
    second = np.zeros((dim, dim))
    chunk = 100_000
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        g = rng.normal((n, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        mean += g.sum(axis=0)
        second += g.T @ g
        done += n
    mean /= n_samples
    second /= n_samples
    mean_err = float(np.max(np.abs(mean)))
    mean_bound = 4.0 / np.sqrt(n_samples)
    moment_err = float(np.max(np.abs(second - np.eye(dim) / dim)))
    return [
        CheckResult(f"sphere_mean_d{dim}", mean_err <= mean_bound, mean_err, mean_bound),
        CheckResult(f"sphere_second_moment_d{dim}", moment_err <= 0.005, moment_err, 0.005),
    ]


def check_one_point_unbiased(
    n_samples: int = 1_000_000,
    estimator: Callable = one_point_estimate,
) -> CheckResult:
    """Sample mean of the one-point estimate converges to beta for linear f."""
    d, G, B = 8, 1.0, 1.0
    rng = RngStream(VERIFY_SEED, 20)
    beta = G * sample_unit_sphere(rng, d)
    cost = LinearCost(beta, G)
    w = np.zeros(d)
    acc = np.zeros(d)
    for _ in range(n_samples):
        acc += estimator(cost, w, B, rng).estimate
    err = float(np.linalg.norm(acc / n_samples - beta))
    bound = 6.0 * (2.0 * d * G) / np.sqrt(n_samples)
    return CheckResult("one_point_unbiased", err <= bound, err, bound)


def check_two_point_unbiased(
    n_samples: int = 1_000_000,
    estimator: Callable = two_point_estimate,
) -> CheckResult:
    d, G = 8, 1.0
    rng = RngStream(VERIFY_SEED, 21)
    beta = G * sample_unit_sphere(rng, d)
    cost = LinearCost(beta, G)
    x = rng.normal(d) * 0.1
    acc = np.zeros(d)
    for _ in range(n_samples):
        acc += estimator(cost, x, 0.5, rng).estimate
    err = float(np.linalg.norm(acc / n_samples - beta))
    bound = 6.0 * d * G / np.sqrt(n_samples)
    return CheckResult("two_point_unbiased", err <= bound, err, bound)


def check_two_point_variance(n_samples: int = 100_000) -> CheckResult:
    """Empirical E||g - beta||^2 within the constant-slack variance bound."""
    d, G = 8, 1.0
    rng = RngStream(VERIFY_SEED, 22)
    beta = G * sample_unit_sphere(rng, d)
    cost = LinearCost(beta, G)
    x = rng.normal(d) * 0.1
    acc = 0.0
    for _ in range(n_samples):
        g = two_point_estimate(cost, x, 0.5, rng).estimate
        diff = g - beta
        acc += float(diff @ diff)
    observed = acc / n_samples
    return CheckResult("two_point_variance", observed <= 2.0 * d * G * G, observed, 2.0 * d * G * G)


def check_one_point_norm(n_samples: int = 100_000) -> CheckResult:
    """Pointwise ||g|| <= 2dG when delta = B and the center is feasible."""
    d, G, B = 8, 1.0, 1.0
    rng = RngStream(VERIFY_SEED, 23)
    beta = G * sample_unit_sphere(rng, d)
    cost = LinearCost(beta, G)
    worst = 0.0
    for _ in range(n_samples):
        w = rng.normal(d)
        w *= B * rng.generator.uniform() ** (1.0 / d) / np.linalg.norm(w)
        g = one_point_estimate(cost, w, B, rng).estimate
        worst = max(worst, float(np.linalg.norm(g)))
    bound = 2.0 * d * G * (1.0 + 1e-9)
    return CheckResult("one_point_norm", worst <= bound, worst, bound)


def check_lazy_potential(n_pairs: int = 100_000) -> CheckResult:
    """d(x*, y) dominates ||x* - proj(y)||^2 / 2 on random pairs."""
    d, B = 8, 1.0
    rng = RngStream(VERIFY_SEED, 24)
    worst = np.inf
    for _ in range(n_pairs):
        x = rng.normal(d)
        x *= B * rng.generator.uniform() ** (1.0 / d) / np.linalg.norm(x)
        y = rng.normal(d) * 3.0
        yh = project_l2_ball(y, B)
        gap = lazy_potential(x, y, B) - 0.5 * float((x - yh) @ (x - yh))
        worst = min(worst, gap)
    return CheckResult("lazy_potential_inequality", worst >= -1e-12, worst, -1e-12)


def check_rademacher() -> CheckResult:
    """Exact enumeration of E|S_T| stays above sqrt(T)/2 for T in 1..16."""
    margins = []
    details = []
    for horizon in range(1, 17):
        expected = rademacher_expected_walk(horizon)
        floor = np.sqrt(horizon) / 2.0
        margins.append(expected - floor)
        details.append(f"T={horizon}: E|S|={expected:.4f} floor={floor:.4f}")
    worst = min(margins)
    return CheckResult(
        "rademacher_walk", worst >= 0.0, worst, 0.0, detail="; ".join(details)
    )


def check_rng_replay(n_draws: int = 10_000) -> CheckResult:
    a = RngStream(VERIFY_SEED, 42).normal(n_draws)
    b = RngStream(VERIFY_SEED, 42).normal(n_draws)
    diff = float(np.max(np.abs(a - b)))
    return CheckResult("rng_replay", diff == 0.0, diff, 0.0)


def check_consensus_bound() -> list[CheckResult]:
    """Round-averaged consensus against 1.5x its analytic bound."""
    out = []
    sigma = 1.0
    for zeta in (0.0, 0.5):
        for K in (4, 16):
            config = RunConfig(
                n_machines=4,
                local_steps=K,
                comm_rounds=64,
                dim=8,
                lipschitz=1.0,
                radius=1.0,
                algorithm="fedosgd_first_order",
                adversary=AdversarySpec(
                    kind="stochastic_linear",
                    dim=8,
                    n_machines=4,
                    lipschitz=1.0,
                    zeta=zeta,
                ),
                zeta=zeta,
                seed=VERIFY_SEED,
                noise_sigma=sigma,
            )
            eta = resolve_schedule(config).eta
            ledger = run(config)
            bound = 1.5 * 2.0 * eta * (sigma * np.sqrt(K) + zeta * K)
            observed = ledger.consensus_mean
            out.append(
                CheckResult(
                    f"consensus_bound_K{K}_zeta{zeta}",
                    observed <= bound,
                    observed,
                    bound,
                )
            )
    return out


def run_all_checks() -> list[CheckResult]:
    results: list[CheckResult] = []
    for dim in (2, 8, 64):
        results.extend(check_sphere_moments(dim))
    results.append(check_one_point_unbiased())
    results.append(check_two_point_unbiased())
    results.append(check_two_point_variance())
    results.append(check_one_point_norm())
    results.append(check_lazy_potential())
    results.append(check_rademacher())
    results.append(check_rng_replay())
    results.extend(check_consensus_bound())
    return results
