import json

import numpy as np
import pytest

from fedoco import cli
from fedoco.harness import (
    CSV_COLUMNS,
    ConfigParseError,
    build_run_config,
    expand_sweep,
    fit_loglog,
    parse_config_text,
    parse_sweep,
    read_rows,
    run_sweep,
    write_rows,
)

MINIMAL = """
machines = 1
local_steps = 1
rounds = 16
dim = 2
lipschitz_g = 1.0
radius_b = 1.0
algorithm = nc_ogd
adversary = stochastic_linear
seed = 7
"""

SWEEP = """
machines = 1
local_steps = 1
rounds = 64
dim = 4
lipschitz_g = 1.0
radius_b = 1.0
algorithm = nc_ogd
adversary = stochastic_linear
seed = 7

[axes]
rounds = 64, 128, 256

[sweep]
replicates = 2
output = {out}
"""


class TestParsing:
    def test_scalar_types(self):
        parsed = parse_config_text("a = 3\nb = 2.5\nc = hello\n")
        assert parsed == {"a": 3, "b": 2.5, "c": "hello"}

    def test_lists_and_sections(self):
        parsed = parse_config_text("[axes]\nrounds = 1, 2, 4\n[sweep]\nreplicates = 2\n")
        assert parsed == {"axes.rounds": [1, 2, 4], "sweep.replicates": 2}

    def test_comments_and_blanks(self):
        parsed = parse_config_text("# header\n\na = 1  # trailing\n")
        assert parsed == {"a": 1}

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigParseError, match="duplicate"):
            parse_config_text("a = 1\na = 2\n")

    def test_missing_equals_reports_line(self):
        with pytest.raises(ConfigParseError, match="line 2"):
            parse_config_text("a = 1\nbogus line\n")

    def test_empty_value_rejected(self):
        with pytest.raises(ConfigParseError):
            parse_config_text("a =\n")


class TestBuildConfig:
    def test_minimal_round_trip(self):
        cfg = build_run_config(parse_config_text(MINIMAL))
        assert cfg.n_machines == 1
        assert cfg.horizon == 16
        assert cfg.adversary.kind == "stochastic_linear"

    def test_missing_required_key(self):
        text = MINIMAL.replace("radius_b = 1.0", "")
        with pytest.raises(ConfigParseError, match="radius_b"):
            build_run_config(parse_config_text(text))

    def test_type_errors_are_schema_errors(self):
        text = MINIMAL.replace("machines = 1", "machines = 1.5")
        with pytest.raises(ConfigParseError):
            build_run_config(parse_config_text(text))

    def test_manual_schedule_table(self):
        text = MINIMAL + "\n[schedule]\neta = 0.125\ndelta = 0.5\n"
        cfg = build_run_config(parse_config_text(text))
        assert cfg.schedule.eta == 0.125
        assert cfg.schedule.delta == 0.5

    def test_adversary_options(self):
        text = MINIMAL.replace("adversary = stochastic_linear", "adversary = adaptive_linear")
        text += "\n[adversary]\ntargeting_rule = per_machine\n"
        cfg = build_run_config(parse_config_text(text))
        assert cfg.adversary.targeting_rule == "per_machine"


class TestSweep:
    def test_expansion_counts_and_seeds(self):
        spec = parse_sweep(parse_config_text(SWEEP.format(out="x.csv")))
        runs = expand_sweep(spec)
        assert len(runs) == 6  # 3 axis points x 2 replicates
        seeds = sorted({mapping["seed"] for _, mapping in runs})
        assert seeds == [7, 8]

    def test_cap_enforced_before_any_run(self):
        text = SWEEP.format(out="x.csv") + "max_runs = 4\n"
        text = text.replace("[sweep]", "[sweep]")
        mapping = parse_config_text(text)
        mapping["sweep.max_runs"] = 4
        with pytest.raises(ConfigParseError, match="cap"):
            expand_sweep(parse_sweep(mapping))

    def test_horizon_axis(self):
        mapping = parse_config_text(SWEEP.format(out="x.csv"))
        del mapping["axes.rounds"]
        mapping["local_steps"] = 4
        mapping["axes.horizon"] = [64, 128]
        runs = expand_sweep(parse_sweep(mapping))
        assert {m["rounds"] for _, m in runs} == {16, 32}

    def test_horizon_must_divide(self):
        mapping = parse_config_text(SWEEP.format(out="x.csv"))
        del mapping["axes.rounds"]
        mapping["local_steps"] = 4
        mapping["axes.horizon"] = [66]
        with pytest.raises(ConfigParseError, match="multiple"):
            expand_sweep(parse_sweep(mapping))

    def test_rows_deterministic_and_parallel_invariant(self, tmp_path):
        mapping = parse_config_text(SWEEP.format(out=tmp_path / "a.csv"))
        spec = parse_sweep(mapping)
        rows_serial = run_sweep(spec, workers=1)
        rows_pool = run_sweep(spec, workers=2)
        for a, b in zip(rows_serial, rows_pool):
            a = {k: v for k, v in a.items() if k != "wall_ms"}
            b = {k: v for k, v in b.items() if k != "wall_ms"}
            assert a == b

    def test_csv_and_json_outputs(self, tmp_path):
        out = tmp_path / "results.csv"
        mapping = parse_config_text(SWEEP.format(out=out))
        spec = parse_sweep(mapping)
        rows = run_sweep(spec, workers=1)
        write_rows(rows, spec.output)
        text = out.read_text().splitlines()
        assert text[0] == ",".join(CSV_COLUMNS)
        mirrored = json.loads(out.with_suffix(".json").read_text())
        assert len(mirrored) == len(rows)
        assert mirrored[0]["run_id"] == 0
        assert mirrored[0]["status"] == "ok"

    def test_failed_rows_carry_status(self):
        mapping = parse_config_text(SWEEP.format(out="x.csv"))
        mapping["zeta"] = 99.0  # infeasible against lipschitz_g = 1
        spec = parse_sweep(mapping)
        rows = run_sweep(spec, workers=1)
        assert all(r["status"].startswith("error") for r in rows)


class TestGoldenHeader:
    def test_column_order_is_frozen(self):
        assert CSV_COLUMNS == [
            "run_id",
            "algorithm",
            "adversary",
            "M",
            "K",
            "R",
            "T",
            "d",
            "G",
            "B",
            "zeta",
            "eta",
            "delta",
            "seed",
            "avg_regret",
            "consensus_mean",
            "fstar",
            "comparator_loss",
            "wall_ms",
            "status",
        ]


class TestFitLogLog:
    def test_exact_power_law(self):
        rows = [
            {"x": x, "y": 3.7 / np.sqrt(x), "status": "ok"} for x in (10, 100, 1000, 10000)
        ]
        fit = fit_loglog(rows, "x", "y")["all"]
        assert fit.slope == pytest.approx(-0.5, abs=1e-9)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_series(self):
        rows = [{"x": x, "y": 2.0, "status": "ok"} for x in (1, 2, 4, 8)]
        fit = fit_loglog(rows, "x", "y")["all"]
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_replicates_averaged_linearly(self):
        rows = []
        for x in (1.0, 2.0, 4.0):
            rows.append({"x": x, "y": 1.5 / x, "status": "ok"})
            rows.append({"x": x, "y": 0.5 / x, "status": "ok"})
        fit = fit_loglog(rows, "x", "y")["all"]
        # The linear-space mean of each pair is exactly 1/x; a log-space mean
        # would land elsewhere, so this pins the averaging convention.
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)

    def test_nonpositive_rows_excluded(self, capsys):
        rows = [{"x": x, "y": 1.0 / x, "status": "ok"} for x in (1, 2, 4)]
        rows.append({"x": 8, "y": -1.0, "status": "ok"})
        fit = fit_loglog(rows, "x", "y")["all"]
        assert fit.n_points == 3
        assert "nonpositive" in capsys.readouterr().err

    def test_groups(self):
        rows = []
        for g, c in (("a", 1.0), ("b", 2.0)):
            for x in (1, 2, 4):
                rows.append({"x": x, "y": c * x, "g": g, "status": "ok"})
        fits = fit_loglog(rows, "x", "y", group_by="g")
        assert set(fits) == {"a", "b"}
        assert fits["a"].slope == pytest.approx(1.0, abs=1e-12)

    def test_too_few_points(self):
        rows = [{"x": x, "y": 1.0, "status": "ok"} for x in (1, 2)]
        with pytest.raises(ValueError, match=">= 3"):
            fit_loglog(rows, "x", "y")


class TestCli:
    def write(self, tmp_path, text, name="cfg.txt"):
        path = tmp_path / name
        path.write_text(text)
        return path

    def test_run_ok(self, tmp_path, capsys):
        path = self.write(tmp_path, MINIMAL)
        assert cli.main(["run", str(path)]) == 0
        out = capsys.readouterr().out
        assert "avg_regret" in out

    def test_run_repeatable_output(self, tmp_path, capsys):
        path = self.write(tmp_path, MINIMAL)
        cli.main(["run", str(path)])
        first = capsys.readouterr().out
        cli.main(["run", str(path)])
        second = capsys.readouterr().out
        assert first == second

    def test_run_appends_ledger_record(self, tmp_path):
        out = tmp_path / "runs.jsonl"
        path = self.write(tmp_path, MINIMAL + f"\noutput = {out}\n")
        cli.main(["run", str(path)])
        cli.main(["run", str(path)])
        records = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(records) == 2
        assert records[0]["avg_regret"] == records[1]["avg_regret"]

    def test_missing_key_exits_2(self, tmp_path, capsys):
        path = self.write(tmp_path, MINIMAL.replace("radius_b = 1.0", ""))
        assert cli.main(["run", str(path)]) == 2
        assert "radius_b" in capsys.readouterr().err

    def test_incompatible_oracle_exits_3(self, tmp_path, capsys):
        path = self.write(
            tmp_path,
            MINIMAL.replace("algorithm = nc_ogd", "algorithm = fedposgd")
            + "\noracle = first_order\n",
        )
        assert cli.main(["run", str(path)]) == 3
        assert "one_point" in capsys.readouterr().err

    def test_sweep_and_fit(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        path = self.write(tmp_path, SWEEP.format(out=out), name="sweep.txt")
        assert cli.main(["sweep", str(path), "--workers", "1"]) == 0
        assert out.exists() and out.with_suffix(".json").exists()
        assert cli.main(["fit", str(out), "--x", "T", "--y", "avg_regret"]) == 0
        assert "slope" in capsys.readouterr().out

    def test_sweep_cap_exits_2(self, tmp_path):
        text = SWEEP.format(out=tmp_path / "r.csv") + "\n"
        text = text.replace("replicates = 2", "replicates = 2\nmax_runs = 3")
        path = self.write(tmp_path, text, name="sweep.txt")
        assert cli.main(["sweep", str(path)]) == 2

    def test_fit_reads_back_written_rows(self, tmp_path):
        rows = [
            {c: 0 for c in CSV_COLUMNS} | {"run_id": i, "T": 2**i, "avg_regret": 1.0 / 2**i, "status": "ok"}
            for i in range(3, 7)
        ]
        out = tmp_path / "t.csv"
        write_rows(rows, out)
        back = read_rows(out)
        fit = fit_loglog(back, "T", "avg_regret")["all"]
        assert fit.slope == pytest.approx(-1.0, abs=1e-9)
