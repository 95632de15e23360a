"""Experiment harness: config files, sweeps, result tables, slope fits.

Config files are plain text, one ``key = value`` per line with optional
``[section]`` tables (values: ints, floats, strings, or comma-separated
lists). Sweeps run their cartesian product of axes, optionally across
processes, and append one row per run to a CSV whose header is frozen.
"""
from __future__ import annotations

import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adversaries import ADVERSARY_KINDS, AdversarySpec
from .algorithms import Schedule
from .simulator import RunConfig, run

WORKERS_ENV = "FEDOCO_WORKERS"

CSV_COLUMNS = [
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

REQUIRED_KEYS = (
    "machines",
    "local_steps",
    "rounds",
    "dim",
    "lipschitz_g",
    "radius_b",
    "algorithm",
    "adversary",
    "seed",
)

AXIS_KEYS = (
    "machines",
    "local_steps",
    "rounds",
    "horizon",
    "dim",
    "zeta",
    "algorithm",
    "seed",
)


class ConfigParseError(ValueError):
    """Malformed config text; carries the offending line number."""

    def __init__(self, line_no: int | None, message: str):
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{message}")


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines with [section] tables into a flat dict.

    Section keys are flattened as ``section.key``. Values become int, then
    float, then bare string; comma-separated values become lists.
    """
    out: dict = {}
    section = ""
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigParseError(line_no, f"malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigParseError(line_no, f"expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigParseError(line_no, "empty key")
        full_key = f"{section}.{key}" if section else key
        if full_key in out:
            raise ConfigParseError(line_no, f"duplicate key {full_key!r}")
        out[full_key] = _parse_value(value.strip(), line_no)
    return out


def _parse_value(text: str, line_no: int):
    if text == "":
        raise ConfigParseError(line_no, "empty value")
    if "," in text:
        return [_parse_scalar(part.strip(), line_no) for part in text.split(",") if part.strip()]
    return _parse_scalar(text, line_no)


def _parse_scalar(text: str, line_no: int):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def build_run_config(mapping: dict) -> RunConfig:
    """Assemble a RunConfig from parsed config keys.

    Missing or mistyped keys raise ConfigParseError (a schema problem);
    semantically incompatible values surface later as ValueError from
    validation.
    """
    for key in REQUIRED_KEYS:
        if key not in mapping:
            raise ConfigParseError(None, f"missing required key {key!r}")
    M = _expect_int(mapping, "machines")
    K = _expect_int(mapping, "local_steps")
    R = _expect_int(mapping, "rounds")
    d = _expect_int(mapping, "dim")
    G = _expect_number(mapping, "lipschitz_g")
    B = _expect_number(mapping, "radius_b")
    zeta = _expect_number(mapping, "zeta") if "zeta" in mapping else 0.0
    seed = _expect_int(mapping, "seed")
    algorithm = _expect_str(mapping, "algorithm")
    noise_sigma = (
        _expect_number(mapping, "noise_sigma") if "noise_sigma" in mapping else 0.0
    )
    adversary = _build_adversary(mapping, d, M, G, zeta)
    schedule = _build_schedule(mapping)
    return RunConfig(
        n_machines=M,
        local_steps=K,
        comm_rounds=R,
        dim=d,
        lipschitz=G,
        radius=B,
        algorithm=algorithm,
        adversary=adversary,
        zeta=zeta,
        schedule=schedule,
        seed=seed,
        noise_sigma=noise_sigma,
        oracle=mapping.get("oracle"),
    )


def _build_adversary(mapping: dict, d: int, M: int, G: float, zeta: float) -> AdversarySpec:
    kind = mapping.get("adversary")
    if not isinstance(kind, str) or kind not in ADVERSARY_KINDS:
        raise ConfigParseError(None, f"adversary must be one of {ADVERSARY_KINDS}, got {kind!r}")
    kwargs = {}
    if "adversary.targeting_rule" in mapping:
        kwargs["targeting_rule"] = mapping["adversary.targeting_rule"]
    if "adversary.huber_smoothness" in mapping:
        kwargs["huber_smoothness"] = float(mapping["adversary.huber_smoothness"])
    if "adversary.huber_center_radius" in mapping:
        kwargs["huber_center_radius"] = float(mapping["adversary.huber_center_radius"])
    return AdversarySpec(
        kind=kind, dim=d, n_machines=M, lipschitz=G, zeta=zeta, **kwargs
    )


def _build_schedule(mapping: dict) -> Schedule | str:
    name = mapping.get("schedule", "default")
    if "schedule.eta" in mapping:
        return Schedule(
            eta=float(mapping["schedule.eta"]),
            delta=float(mapping.get("schedule.delta", 0.0)),
            source="manual",
        )
    if not isinstance(name, str):
        raise ConfigParseError(None, f"schedule must be a name, got {name!r}")
    return name


def _expect_int(mapping: dict, key: str) -> int:
    v = mapping[key]
    if not isinstance(v, int):
        raise ConfigParseError(None, f"key {key!r} must be an integer, got {v!r}")
    return v


def _expect_number(mapping: dict, key: str) -> float:
    v = mapping[key]
    if not isinstance(v, (int, float)):
        raise ConfigParseError(None, f"key {key!r} must be a number, got {v!r}")
    return float(v)


def _expect_str(mapping: dict, key: str) -> str:
    v = mapping[key]
    if not isinstance(v, str):
        raise ConfigParseError(None, f"key {key!r} must be a string, got {v!r}")
    return v


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepSpec:
    """A base config, named axes to vary, and replication over seeds."""

    base: dict
    axes: dict[str, list]
    replicates: int
    output: str
    max_runs: int = 10_000


def parse_sweep(mapping: dict) -> SweepSpec:
    axes: dict[str, list] = {}
    base: dict = {}
    replicates = 1
    output = "sweep.csv"
    max_runs = 10_000
    for key, value in mapping.items():
        if key.startswith("axes."):
            axis = key[len("axes."):]
            if axis not in AXIS_KEYS:
                raise ConfigParseError(None, f"unsupported sweep axis {axis!r}")
            axes[axis] = value if isinstance(value, list) else [value]
        elif key == "sweep.replicates":
            replicates = int(value)
        elif key == "sweep.output":
            output = str(value)
        elif key == "sweep.max_runs":
            max_runs = int(value)
        else:
            base[key] = value
    if replicates < 1:
        raise ConfigParseError(None, "replicates must be at least 1")
    return SweepSpec(base=base, axes=axes, replicates=replicates, output=output, max_runs=max_runs)


def expand_sweep(spec: SweepSpec) -> list[tuple[int, dict]]:
    """Materialize the cartesian product of axes times replicates.

    Run ids enumerate points in a fixed order, and each replicate bumps the
    seed, so the expansion is deterministic and independent of how runs are
    later scheduled. Returns key-value mappings; configs are built (and any
    per-point problem recorded) when each run executes.
    """
    axis_names = sorted(spec.axes)
    sizes = [len(spec.axes[a]) for a in axis_names]
    n_points = int(np.prod(sizes)) if axis_names else 1
    total = n_points * spec.replicates
    if total > spec.max_runs:
        raise ConfigParseError(
            None, f"sweep would launch {total} runs, above the cap of {spec.max_runs}"
        )
    runs = []
    run_id = 0
    for index in range(n_points):
        mapping = dict(spec.base)
        rest = index
        for name, size in zip(axis_names, sizes):
            mapping_value = spec.axes[name][rest % size]
            rest //= size
            if name == "horizon":
                K = mapping.get("local_steps", 1)
                if mapping_value % K != 0:
                    raise ConfigParseError(
                        None, f"horizon {mapping_value} is not a multiple of local_steps {K}"
                    )
                mapping["rounds"] = mapping_value // K
            else:
                mapping[name] = mapping_value
        for rep in range(spec.replicates):
            rep_mapping = dict(mapping)
            rep_mapping["seed"] = int(rep_mapping.get("seed", 0)) + rep
            runs.append((run_id, rep_mapping))
            run_id += 1
    return runs


def _execute_one(args: tuple[int, dict]) -> dict:
    run_id, mapping = args
    K = mapping.get("local_steps", "")
    R = mapping.get("rounds", "")
    row = {
        "run_id": run_id,
        "algorithm": mapping.get("algorithm", ""),
        "adversary": mapping.get("adversary", ""),
        "M": mapping.get("machines", ""),
        "K": K,
        "R": R,
        "T": K * R if isinstance(K, int) and isinstance(R, int) else "",
        "d": mapping.get("dim", ""),
        "G": mapping.get("lipschitz_g", ""),
        "B": mapping.get("radius_b", ""),
        "zeta": mapping.get("zeta", 0.0),
        "eta": "",
        "delta": "",
        "seed": mapping.get("seed", ""),
        "avg_regret": "",
        "consensus_mean": "",
        "fstar": "",
        "comparator_loss": "",
        "wall_ms": "",
        "status": "ok",
    }
    start = time.perf_counter()
    try:
        ledger = run(build_run_config(mapping))
    except Exception as exc:  # recorded, not raised: other runs continue
        row["status"] = f"error: {exc}"
        row["wall_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
        return row
    row.update({k: v for k, v in ledger.to_record().items() if k in row})
    row["wall_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
    return row


def worker_count(n_runs: int) -> int:
    cap = os.environ.get(WORKERS_ENV)
    workers = os.cpu_count() or 1
    if cap is not None:
        workers = max(1, int(cap))
    return max(1, min(workers, n_runs))


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list[dict]:
    """Run every sweep point and return rows sorted by run id."""
    runs = expand_sweep(spec)
    if workers is None:
        workers = worker_count(len(runs))
    if workers <= 1 or len(runs) == 1:
        rows = [_execute_one(item) for item in runs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_execute_one, runs))
    rows.sort(key=lambda r: r["run_id"])
    return rows


def write_rows(rows: list[dict], output: str | Path) -> None:
    """Write the CSV table and its JSON mirror (same rows as objects)."""
    path = Path(output)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _csv_cell(row[c]) for c in CSV_COLUMNS})
    path.with_suffix(".json").write_text(json.dumps(rows, indent=2) + "\n")


def _csv_cell(value) -> str:
    # repr keeps float round-trips exact across write/read cycles
    return repr(value) if isinstance(value, float) else str(value)


def read_rows(path: str | Path) -> list[dict]:
    """Read a results CSV back into typed rows."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            rows.append(
                {k: (_parse_scalar(v, 0) if v != "" else "") for k, v in raw.items()}
            )
    if not rows and reader.fieldnames is None:
        raise ValueError(f"empty results file {path}")
    return rows


# ---------------------------------------------------------------------------
# Log-log slope fits


@dataclass(frozen=True)
class FitResult:
    """Ordinary least squares on (log x, log y)."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_loglog(
    rows: list[dict],
    x_column: str,
    y_column: str,
    group_by: str | None = None,
) -> dict[str, FitResult]:
    """Fit log y against log x, one fit per group.

    Replicate rows sharing an x value are averaged in linear space before
    the log transform. Rows with nonpositive y are excluded with a warning
    on stderr.
    """
    groups: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        if row.get("status", "ok") != "ok":
            continue
        y = float(row[y_column])
        x = float(row[x_column])
        if y <= 0:
            print(
                f"fit_loglog: dropping row with nonpositive {y_column}={y}",
                file=sys.stderr,
            )
            continue
        key = str(row[group_by]) if group_by else "all"
        groups.setdefault(key, {}).setdefault(x, []).append(y)
    out = {}
    for key, by_x in groups.items():
        xs = sorted(by_x)
        if len(xs) < 3:
            raise ValueError(f"group {key!r} has {len(xs)} distinct x values; need >= 3")
        log_x = np.log([x for x in xs])
        log_y = np.log([float(np.mean(by_x[x])) for x in xs])
        slope, intercept = np.polyfit(log_x, log_y, 1)
        predicted = slope * log_x + intercept
        ss_res = float(np.sum((log_y - predicted) ** 2))
        ss_tot = float(np.sum((log_y - log_y.mean()) ** 2))
        r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
        out[key] = FitResult(
            slope=float(slope),
            intercept=float(intercept),
            r_squared=float(r_squared),
            n_points=len(xs),
        )
    return out
