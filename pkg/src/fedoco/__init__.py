"""Online convex optimization across intermittently communicating machines.

M machines face per-round convex costs chosen by an adversary, observe
gradients or only function values (bandit feedback), communicate R times
with K local steps in between, and are charged regret at the exact points
they query. The package provides the cost oracles, gradient estimators,
adversaries, learners, the round-loop simulator, and a CLI for sweeps and
slope analysis.
"""
from .adversaries import (
    AdversarySpec,
    History,
    fstar_of_run,
    rademacher_expected_walk,
    realized_heterogeneity,
)
from .algorithms import (
    MachineState,
    Schedule,
    communicate,
    schedule_noisy_first_order,
    schedule_ogd,
    schedule_one_point,
    schedule_smooth_two_point,
    schedule_two_point,
)
from .costs import CustomCost, HuberCost, LinearCost, noisy_gradient, spot_check_cost
from .estimators import ZoQuery, one_point_estimate, smoothed_value, two_point_estimate
from .geometry import RngStream, lazy_potential, project_l2_ball, sample_unit_sphere
from .harness import FitResult, SweepSpec, fit_loglog, parse_config_text, run_sweep
from .simulator import (
    RegretLedger,
    RunConfig,
    comparator_convex,
    comparator_linear,
    per_machine_average_regrets,
    run,
)

__all__ = [
    "AdversarySpec",
    "CustomCost",
    "FitResult",
    "History",
    "HuberCost",
    "LinearCost",
    "MachineState",
    "RegretLedger",
    "RngStream",
    "RunConfig",
    "Schedule",
    "SweepSpec",
    "ZoQuery",
    "communicate",
    "comparator_convex",
    "comparator_linear",
    "fit_loglog",
    "fstar_of_run",
    "lazy_potential",
    "noisy_gradient",
    "one_point_estimate",
    "parse_config_text",
    "per_machine_average_regrets",
    "project_l2_ball",
    "rademacher_expected_walk",
    "realized_heterogeneity",
    "run",
    "run_sweep",
    "sample_unit_sphere",
    "schedule_noisy_first_order",
    "schedule_ogd",
    "schedule_one_point",
    "schedule_smooth_two_point",
    "schedule_two_point",
    "smoothed_value",
    "spot_check_cost",
    "two_point_estimate",
]
