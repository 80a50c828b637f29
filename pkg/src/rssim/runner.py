"""Scenario pipeline execution, sweeps, and CSV emission.

A point evaluation is fully deterministic given (config, mode, seed):
placement, covariances, estimation statistics, the closed-form moment
table, common weights, and the power allocation are all seeded from one
SeedSequence.  Sweep points derive their seeds from the master seed and
their (axis index, drop index, mode) coordinates, so any point can be
reproduced in isolation.
"""

import csv
import io
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import RunSettings, SweepSpec
from .errors import ConfigError
from .estimation import build_estimation_model
from .link import se_report
from .moments import closed_form_moments, default_quartic_variant
from .power import IlaWfOptions, ila_wf
from .precoding import build_common_weight_problem, solve_common_weights
from .scenario import ScenarioConfig, generate_scenario

CSV_COLUMNS = (
    "axis", "axis_value", "drop", "mode", "sum_se", "se_common",
    "se_private_total", "rho_c", "l_min", "iterations", "seed",
)

MODE_CODES = {"rs": 0, "no_rs": 1}


@dataclass
class ResultRow:
    axis: str
    axis_value: float
    drop: int
    mode: str
    sum_se: float
    se_common: float
    se_private_total: float
    rho_c: float
    l_min: int
    iterations: int
    seed: int

    def as_csv_values(self):
        return (
            self.axis,
            _fmt(self.axis_value),
            str(self.drop),
            self.mode,
            _fmt(self.sum_se),
            _fmt(self.se_common),
            _fmt(self.se_private_total),
            _fmt(self.rho_c),
            str(self.l_min),
            str(self.iterations),
            str(self.seed),
        )


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def derive_point_seed(master_seed: int, drop_index: int) -> int:
    """Stable per-drop seed.

    The seed is shared by every axis value and both transmission modes of
    a drop, so sweep curves and mode comparisons are paired on identical
    UE placements; any point remains reproducible in isolation from
    (master seed, drop index) alone.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(drop_index,))
    return int(ss.generate_state(1)[0])


def worker_count() -> int:
    """Sweep parallelism, capped by the RSSIM_THREADS environment variable."""
    env = os.environ.get("RSSIM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"RSSIM_THREADS must be an integer, got {env!r}") from exc
        return max(1, n)
    return min(4, os.cpu_count() or 1)


def resolve_quartic_variant(settings: RunSettings | None) -> str:
    settings = settings or RunSettings()
    if settings.quartic_variant == "auto":
        return default_quartic_variant()
    return settings.quartic_variant


def evaluate_point(
    config: ScenarioConfig,
    mode: str,
    seed: int,
    solver: IlaWfOptions | None = None,
    settings: RunSettings | None = None,
):
    """Run the full pipeline at one (config, mode, seed) point.

    Returns (SEReport, PowerAllocation, weights).  In "no_rs" mode the
    common stream is absent: no weights are solved and the allocator keeps
    the common power pinned to zero.
    """
    if mode not in MODE_CODES:
        raise ConfigError(f"mode must be one of {tuple(MODE_CODES)}, got {mode!r}")
    settings = settings or RunSettings()
    solver = solver or IlaWfOptions()
    rng = np.random.default_rng(seed)
    _, cov = generate_scenario(config, rng)
    model = build_estimation_model(cov, config.rho_tr_effective)
    sigma2 = config.noise_mw
    rho_total = config.rho_total_mw
    weights = None
    if mode == "rs":
        variant = resolve_quartic_variant(settings)
        mr_table = closed_form_moments(model)
        problem = build_common_weight_problem(
            model, mr_table, np.full(config.K, rho_total / config.K), sigma2,
            include_pi=settings.include_pi,
        )
        weights, _ = solve_common_weights(problem)
        moments = closed_form_moments(model, weights, variant)
        options = replace(solver, freeze_common=False)
    else:
        moments = closed_form_moments(model)
        options = replace(solver, freeze_common=True)
    alloc = ila_wf(moments, rho_total, sigma2, config, options)
    report = se_report(alloc.powers, moments, config)
    return report, alloc, weights


def run_point(
    config: ScenarioConfig,
    mode: str,
    seed: int,
    solver: IlaWfOptions | None = None,
    settings: RunSettings | None = None,
    axis: str = "power_dbm",
    axis_value: float | None = None,
    drop: int = 0,
) -> ResultRow:
    """Evaluate one point and flatten it into a result row."""
    report, alloc, _ = evaluate_point(config, mode, seed, solver, settings)
    if axis_value is None:
        axis_value = {
            "power_dbm": config.rho_total_dbm,
            "antennas": config.M,
            "users": config.K,
        }[axis]
    return ResultRow(
        axis=axis,
        axis_value=float(axis_value),
        drop=drop,
        mode=mode,
        sum_se=report.sum_se,
        se_common=report.se_common,
        se_private_total=report.se_private_total,
        rho_c=alloc.powers.rho_c,
        l_min=report.l_min,
        iterations=alloc.iterations,
        seed=seed,
    )


def apply_axis(config: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "power_dbm":
        return replace(config, rho_total_dbm=float(value))
    if axis == "antennas":
        return replace(config, M=int(value))
    if axis == "users":
        return replace(config, K=int(value))
    raise ConfigError(f"unknown sweep axis {axis!r}")


def run_sweep(
    spec: SweepSpec,
    config: ScenarioConfig,
    solver: IlaWfOptions | None = None,
    settings: RunSettings | None = None,
    output_path: str | None = None,
) -> list:
    """Evaluate every (value, drop, mode) combination of a sweep.

    Rows are produced in deterministic order (values outer, then drops,
    then modes) regardless of worker scheduling.  When an output path is
    given the CSV is written atomically: a partial file is never left
    behind.
    """
    spec.validate()
    tasks = []
    for value in spec.values:
        point_config = apply_axis(config, spec.axis, value)
        for drop in range(spec.drops):
            for mode in spec.modes:
                seed = derive_point_seed(config.seed, drop)
                tasks.append((point_config, mode, seed, value, drop))

    def work(task):
        point_config, mode, seed, value, drop = task
        return run_point(
            point_config, mode, seed, solver, settings,
            axis=spec.axis, axis_value=value, drop=drop,
        )

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, tasks))
    else:
        rows = [work(t) for t in tasks]

    if output_path is not None:
        write_rows(rows, output_path)
    return rows


def render_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv_values())
    return buf.getvalue()


def write_rows(rows, output_path: str):
    """Atomic CSV write: render, write to a sibling temp file, rename."""
    data = render_csv(rows)
    directory = os.path.dirname(os.path.abspath(output_path))
    if not os.path.isdir(directory):
        raise ConfigError(f"output directory does not exist: {directory}")
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp_path, output_path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
