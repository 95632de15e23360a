from dataclasses import dataclass

import numpy as np
import pytest

from fedoco.adversaries import AdversarySpec
from fedoco.algorithms import Schedule
from fedoco.costs import HuberCost, LinearCost
from fedoco.geometry import RngStream
from fedoco.simulator import (
    RunConfig,
    comparator_convex,
    comparator_linear,
    consensus_series,
    per_machine_average_regrets,
    run,
    validate_config,
)


@dataclass(frozen=True)
class FixedLinear:
    """Test adversary: the same coefficient vector on every machine, every round."""

    beta: tuple
    n_machines: int
    lipschitz: float = 1.0

    def instantiate(self, rng):
        return self

    def emit_round(self, t, history, rng):
        cost = LinearCost(np.array(self.beta), self.lipschitz)
        return [cost] * self.n_machines


def stochastic_cfg(**overrides):
    base = dict(
        n_machines=2,
        local_steps=2,
        comm_rounds=16,
        dim=4,
        lipschitz=1.0,
        radius=1.0,
        algorithm="fedosgd",
        adversary=None,
        zeta=0.0,
        seed=9,
    )
    base.update(overrides)
    if base["adversary"] is None:
        base["adversary"] = AdversarySpec(
            kind="stochastic_linear",
            dim=base["dim"],
            n_machines=base["n_machines"],
            lipschitz=base["lipschitz"],
            zeta=base["zeta"],
        )
    return RunConfig(**base)


class TestSingleRound:
    def test_hand_computed_regret(self):
        # One machine, one round, fixed beta = (1,0): loss at the origin is 0,
        # the comparator sits at (-1,0) with loss -1, so average regret is 1.
        cfg = RunConfig(
            n_machines=1,
            local_steps=1,
            comm_rounds=1,
            dim=2,
            lipschitz=1.0,
            radius=1.0,
            algorithm="nc_ogd",
            adversary=FixedLinear(beta=(1.0, 0.0), n_machines=1),
            seed=0,
        )
        ledger = run(cfg)
        assert ledger.losses[0, 0, 0] == 0.0
        assert np.allclose(ledger.x_star, [-1.0, 0.0])
        assert ledger.comparator_total == pytest.approx(-1.0)
        assert ledger.avg_regret == pytest.approx(1.0)


class TestSymmetricQueries:
    def test_single_round_two_point_regret_is_deterministic(self):
        # Linear costs make the two symmetric query losses cancel exactly, so
        # the one-round regret equals f(x0) - f(x*) = ||beta|| * B for any
        # sampled direction.
        for seed in range(5):
            cfg = RunConfig(
                n_machines=1,
                local_steps=1,
                comm_rounds=1,
                dim=3,
                lipschitz=1.0,
                radius=1.0,
                algorithm="fedosgd",
                adversary=FixedLinear(beta=(0.6, 0.0, 0.8), n_machines=1),
                schedule=Schedule(eta=0.1, delta=0.5, source="manual"),
                seed=seed,
            )
            ledger = run(cfg)
            assert ledger.losses[0, 0, 0] == pytest.approx(-ledger.losses[0, 0, 1])
            assert ledger.avg_regret == pytest.approx(1.0, abs=1e-12)


class TestDeterminism:
    def test_replay_bit_identical(self):
        cfg = stochastic_cfg()
        a, b = run(cfg), run(cfg)
        assert np.array_equal(a.losses, b.losses)
        assert np.array_equal(a.query_points, b.query_points)
        assert a.avg_regret == b.avg_regret
        assert np.array_equal(a.x_star, b.x_star)

    def test_shared_functions_match_single_machine(self):
        # zeta=0 with a noiseless federated learner: every machine replays the
        # single-machine trajectory of the same function stream.
        single = stochastic_cfg(
            n_machines=1,
            local_steps=1,
            comm_rounds=32,
            algorithm="fedosgd_first_order",
            noise_sigma=0.0,
            schedule=Schedule(eta=0.05, delta=0.0, source="manual"),
        )
        double = stochastic_cfg(
            n_machines=2,
            local_steps=1,
            comm_rounds=32,
            algorithm="fedosgd_first_order",
            noise_sigma=0.0,
            schedule=Schedule(eta=0.05, delta=0.0, source="manual"),
        )
        a, b = run(single), run(double)
        assert a.avg_regret == pytest.approx(b.avg_regret, abs=1e-12)
        assert np.array_equal(b.losses[:, 0, :], b.losses[:, 1, :])


class TestLedgerAccounting:
    @pytest.mark.parametrize(
        "algorithm,queries",
        [
            ("nc_ogd", 1),
            ("nc_ogd_one_point", 1),
            ("nc_ogd_two_point", 2),
            ("fedposgd", 1),
            ("fedosgd", 2),
            ("fedosgd_first_order", 1),
        ],
    )
    def test_loss_entry_count(self, algorithm, queries):
        cfg = stochastic_cfg(algorithm=algorithm, noise_sigma=0.3)
        ledger = run(cfg)
        T, M = cfg.horizon, cfg.n_machines
        assert ledger.losses.shape == (T, M, queries)
        assert ledger.losses.size == queries * M * T

    @pytest.mark.parametrize("algorithm", ["nc_ogd", "fedposgd", "fedosgd"])
    def test_audit_within_tolerance(self, algorithm):
        cfg = stochastic_cfg(algorithm=algorithm, zeta=0.3)
        assert run(cfg).audit() <= 1e-10

    def test_audit_huber_stream(self):
        adv = AdversarySpec(
            kind="stochastic_huber",
            dim=3,
            n_machines=2,
            lipschitz=1.0,
            zeta=0.2,
            huber_smoothness=2.0,
        )
        cfg = stochastic_cfg(adversary=adv, dim=3, zeta=0.2, algorithm="fedosgd")
        ledger = run(cfg)
        assert ledger.audit() <= 1e-10

    def test_regret_recomputable_from_parts(self):
        cfg = stochastic_cfg()
        ledger = run(cfg)
        assert ledger.avg_regret == pytest.approx(
            float(ledger.losses.mean()) - ledger.fstar, abs=1e-12
        )


class TestComparators:
    def test_linear_closed_form(self):
        rounds = [
            [LinearCost(np.array([1.0, 2.0]), 3.0)],
            [LinearCost(np.array([2.0, 2.0]), 3.0)],
        ]
        x = comparator_linear(rounds, 1.0)
        assert np.allclose(x, -np.array([3.0, 4.0]) / 5.0)

    def test_linear_zero_sum(self):
        rounds = [
            [LinearCost(np.array([1.0, 0.0]), 1.0)],
            [LinearCost(np.array([-1.0, 0.0]), 1.0)],
        ]
        assert np.allclose(comparator_linear(rounds, 1.0), [0.0, 0.0])

    def test_linear_beats_random_probes(self):
        rng = RngStream(30, 0)
        rounds = []
        for _ in range(40):
            b = rng.normal(3)
            b *= 0.8 / np.linalg.norm(b)
            rounds.append([LinearCost(b, 1.0)])
        x_star = comparator_linear(rounds, 1.0)
        total = sum(c[0].value(x_star) for c in rounds)
        for _ in range(1000):
            y = rng.normal(3)
            y *= rng.generator.uniform() / np.linalg.norm(y)
            assert total <= sum(c[0].value(y) for c in rounds) + 1e-9

    def test_linear_rejects_other_costs(self):
        rounds = [[HuberCost(np.zeros(2), 1.0, 1.0)]]
        with pytest.raises(ValueError):
            comparator_linear(rounds, 1.0)

    def test_convex_interior_minimum(self):
        center = np.array([0.3, -0.2])
        costs = [HuberCost(center, lipschitz=1.0, smoothness=1.0)]
        x, certified = comparator_convex(costs, 1.0, probe_rng=RngStream(31, 0))
        assert certified
        assert np.allclose(x, center, atol=1e-6)

    def test_convex_boundary_minimum(self):
        center = np.array([3.0, 0.0])
        costs = [HuberCost(center, lipschitz=1.0, smoothness=1.0)]
        x, certified = comparator_convex(costs, 1.0, probe_rng=RngStream(32, 0))
        assert certified
        assert np.allclose(x, [1.0, 0.0], atol=1e-6)

    def test_convex_cap_reached_is_uncertified(self):
        costs = [HuberCost(np.array([5.0, 0.0]), lipschitz=1.0, smoothness=1.0)]
        _, certified = comparator_convex(costs, 1.0, max_iters=1)
        assert not certified

    def test_convex_agrees_with_linear(self):
        rng = RngStream(33, 0)
        rounds = []
        for _ in range(30):
            b = rng.normal(2)
            b *= 0.9 / np.linalg.norm(b)
            rounds.append([LinearCost(b, 1.0)])
        flat = [c[0] for c in rounds]
        x_lin = comparator_linear(rounds, 1.0)
        x_cvx, _ = comparator_convex(flat, 1.0, probe_rng=RngStream(34, 0))
        loss_lin = sum(c.value(x_lin) for c in flat)
        loss_cvx = sum(c.value(x_cvx) for c in flat)
        assert abs(loss_lin - loss_cvx) / len(flat) <= 1e-6

    def test_ledger_comparator_beats_probes(self):
        cfg = stochastic_cfg(zeta=0.4)
        ledger = run(cfg)
        rng = RngStream(35, 0)
        for _ in range(1000):
            y = rng.normal(cfg.dim)
            y *= cfg.radius * rng.generator.uniform() ** (1 / cfg.dim) / np.linalg.norm(y)
            probe_total = sum(
                sum(c.value(y) for c in costs) / len(costs)
                for costs in ledger.history.costs
            )
            assert ledger.comparator_total <= probe_total + 1e-9


class TestPerMachineComparator:
    def test_own_comparators_dominate_shared(self):
        # Each machine's own hindsight minimum is at least as good for it, so
        # the averaged per-machine regret can only be larger.
        cfg = stochastic_cfg(algorithm="nc_ogd", zeta=0.8, comm_rounds=32)
        ledger = run(cfg)
        per_machine = per_machine_average_regrets(ledger)
        assert float(per_machine.mean()) >= ledger.avg_regret - 1e-9


class TestConsensusSeries:
    def test_zero_at_phase_starts(self):
        cfg = stochastic_cfg(
            n_machines=3,
            local_steps=4,
            comm_rounds=8,
            algorithm="fedosgd",
            zeta=0.5,
        )
        ledger = run(cfg)
        assert np.all(ledger.consensus[:: cfg.local_steps] == 0.0)
        assert np.any(ledger.consensus > 0.0)

    def test_single_machine_all_zero(self):
        cfg = stochastic_cfg(n_machines=1, algorithm="fedosgd")
        ledger = run(cfg)
        assert np.all(consensus_series(ledger) == 0.0)


class TestValidation:
    def test_oracle_incompatibility(self):
        cfg = stochastic_cfg(algorithm="fedposgd", oracle="first_order")
        with pytest.raises(ValueError, match="one_point"):
            validate_config(cfg)

    def test_zeta_mismatch_with_adversary(self):
        adv = AdversarySpec(
            kind="stochastic_linear", dim=4, n_machines=2, lipschitz=1.0, zeta=0.5
        )
        cfg = stochastic_cfg(adversary=adv, zeta=0.0)
        with pytest.raises(ValueError):
            validate_config(cfg)

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            validate_config(stochastic_cfg(algorithm="sgd_with_vibes"))

    def test_nonpositive_dimension(self):
        with pytest.raises(ValueError):
            validate_config(stochastic_cfg(dim=0))

    def test_divergent_run_aborts_with_round_index(self):
        cfg = stochastic_cfg(
            algorithm="nc_ogd",
            schedule=Schedule(eta=1e308, delta=0.0, source="manual"),
        )
        with pytest.raises(RuntimeError, match="round"):
            run(cfg)
