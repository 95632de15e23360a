"""Command-line entry points: run, sweep, fit, verify.

Exit codes: 0 success, 1 failed checks or partially failed sweeps, 2 for
config parse/schema problems, 3 for semantic configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import harness
from .harness import ConfigParseError
from .simulator import run
from .verify import run_all_checks


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedoco",
        description="Simulate distributed online convex optimization with gradient or bandit feedback.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("config", type=Path)

    p_sweep = sub.add_parser("sweep", help="execute a sweep of runs")
    p_sweep.add_argument("config", type=Path)
    p_sweep.add_argument("--workers", type=int, default=None)

    p_fit = sub.add_parser("fit", help="log-log slope fit over a results CSV")
    p_fit.add_argument("csv", type=Path)
    p_fit.add_argument("--x", required=True)
    p_fit.add_argument("--y", required=True)
    p_fit.add_argument("--group", default=None)

    sub.add_parser("verify", help="run the statistical oracle suite")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args.config)
        if args.command == "sweep":
            return _cmd_sweep(args.config, args.workers)
        if args.command == "fit":
            return _cmd_fit(args.csv, args.x, args.y, args.group)
        return _cmd_verify()
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 3


def _load_mapping(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(None, f"cannot read {path}: {exc}")
    return harness.parse_config_text(text)


def _cmd_run(path: Path) -> int:
    mapping = _load_mapping(path)
    config = harness.build_run_config(mapping)
    started = time.perf_counter()
    ledger = run(config)
    wall_ms = (time.perf_counter() - started) * 1000.0
    record = ledger.to_record()
    record["wall_ms"] = round(wall_ms, 3)
    record["status"] = "ok"
    print(f"avg_regret = {ledger.avg_regret:.10g}")
    print(f"consensus_mean = {ledger.consensus_mean:.10g}")
    print(f"fstar = {ledger.fstar:.10g}")
    print(f"eta = {ledger.eta:.10g}  delta = {ledger.delta:.10g}")
    for warning in ledger.warnings:
        print(f"warning: {warning}")
    output = mapping.get("output")
    if output:
        with Path(str(output)).open("a") as fh:
            fh.write(json.dumps(record) + "\n")
    return 0


def _cmd_sweep(path: Path, workers: int | None) -> int:
    mapping = _load_mapping(path)
    spec = harness.parse_sweep(mapping)
    rows = harness.run_sweep(spec, workers=workers)
    harness.write_rows(rows, spec.output)
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"{len(rows)} runs -> {spec.output} ({len(failed)} failed)")
    return 1 if failed else 0


def _cmd_fit(csv_path: Path, x: str, y: str, group: str | None) -> int:
    rows = harness.read_rows(csv_path)
    fits = harness.fit_loglog(rows, x, y, group_by=group)
    for key, fit in sorted(fits.items()):
        print(
            f"{key}: slope={fit.slope:.6f} intercept={fit.intercept:.6f} "
            f"r2={fit.r_squared:.6f} n={fit.n_points}"
        )
    return 0


def _cmd_verify() -> int:
    results = run_all_checks()
    failed = 0
    for result in results:
        print(result.line())
        if not result.passed:
            failed += 1
    if failed:
        print(f"{failed} of {len(results)} checks failed")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
