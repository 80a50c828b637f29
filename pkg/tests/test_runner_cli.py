import os
import subprocess
import sys

import numpy as np
import pytest

from rssim.cli import main
from rssim.config import SweepSpec
from rssim.errors import ConfigError
from rssim.runner import (
    CSV_COLUMNS,
    derive_point_seed,
    render_csv,
    run_point,
    run_sweep,
    write_rows,
)
from rssim.scenario import ScenarioConfig, generate_scenario
from rssim.units import dbm_to_mw

SMALL = dict(M=12, K=3)


def small_config(**kwargs):
    params = dict(SMALL)
    params.update(kwargs)
    return ScenarioConfig(**params)


def test_run_point_no_rs_has_no_common_stream():
    row = run_point(small_config(), "no_rs", seed=5)
    assert row.rho_c == 0.0
    assert row.se_common == 0.0
    assert row.mode == "no_rs"


def test_run_point_deterministic():
    a = run_point(small_config(), "rs", seed=9)
    b = run_point(small_config(), "rs", seed=9)
    assert a == b


def test_run_point_rejects_unknown_mode():
    with pytest.raises(ConfigError):
        run_point(small_config(), "half_rs", seed=1)


def test_rs_never_below_no_rs_head_to_head():
    """Paired drops: the rate-split allocation may fall back to the plain
    private split, so it can never lose to it."""
    config = small_config(M=24, K=4, rho_total_dbm=30)
    gaps = []
    for drop in range(5):
        seed = derive_point_seed(config.seed, drop)
        rs = run_point(config, "rs", seed)
        nr = run_point(config, "no_rs", seed)
        gaps.append(rs.sum_se - nr.sum_se)
    assert min(gaps) >= 0.0
    assert np.median(gaps) >= 0.0


def test_run_sweep_row_count_and_order(tmp_path):
    spec = SweepSpec(axis="power_dbm", values=(0.0, 10.0, 20.0, 30.0, 40.0),
                     drops=3, modes=("rs", "no_rs"))
    rows = run_sweep(spec, small_config(), output_path=str(tmp_path / "s.csv"))
    assert len(rows) == 5 * 3 * 2
    # deterministic ordering: values outer, then drops, then modes
    expected = [(v, d, m) for v in spec.values for d in range(3) for m in spec.modes]
    assert [(r.axis_value, r.drop, r.mode) for r in rows] == expected


def test_sweep_csv_byte_identical(tmp_path):
    spec = SweepSpec(axis="users", values=(2.0, 4.0), drops=2)
    config = small_config(seed=123)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    run_sweep(spec, config, output_path=str(p1))
    run_sweep(spec, config, output_path=str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_sweep_deterministic_across_worker_counts(tmp_path, monkeypatch):
    spec = SweepSpec(axis="power_dbm", values=(10.0, 20.0), drops=2)
    config = small_config(seed=7)
    monkeypatch.setenv("RSSIM_THREADS", "1")
    serial = render_csv(run_sweep(spec, config))
    monkeypatch.setenv("RSSIM_THREADS", "3")
    pooled = render_csv(run_sweep(spec, config))
    assert serial == pooled


def test_csv_schema_and_float_format():
    row = run_point(small_config(), "rs", seed=2)
    text = render_csv([row])
    header, line = text.strip().split("\n")
    assert header == ",".join(CSV_COLUMNS)
    fields = line.split(",")
    assert len(fields) == len(CSV_COLUMNS)
    # floats carry at most 12 significant digits
    assert len(fields[4].replace(".", "").replace("-", "").lstrip("0")) <= 12


def test_write_rows_refuses_missing_directory(tmp_path):
    row = run_point(small_config(), "no_rs", seed=3)
    bad = tmp_path / "absent" / "out.csv"
    with pytest.raises(ConfigError):
        write_rows([row], str(bad))
    assert not bad.exists()
    assert not any(tmp_path.iterdir())  # no partial files left behind


def test_row_sum_consistency():
    spec = SweepSpec(axis="power_dbm", values=(10.0, 30.0), drops=2)
    for row in run_sweep(spec, small_config()):
        assert row.sum_se == pytest.approx(row.se_common + row.se_private_total, abs=1e-9)


def test_rows_respect_sanity_ceiling():
    """Loose prelog ceiling: catches unit mistakes in the pipeline."""
    config = small_config(rho_total_dbm=30)
    spec = SweepSpec(axis="power_dbm", values=(10.0, 30.0), drops=2)
    rows = run_sweep(spec, config)
    for row in rows:
        point_config = ScenarioConfig(**{**SMALL, "rho_total_dbm": row.axis_value})
        _, cov = generate_scenario(point_config, np.random.default_rng(row.seed))
        ceiling = (
            point_config.prelog
            * (point_config.K + 1)
            * np.log2(1 + dbm_to_mw(row.axis_value) * point_config.M * cov.beta.max()
                      / point_config.noise_mw)
        )
        assert row.sum_se <= ceiling


def test_cli_run_and_exit_codes(tmp_path, capsys):
    assert main(["run", "--seed", "4"]) == 0
    out = capsys.readouterr().out
    assert out.startswith(",".join(CSV_COLUMNS))
    assert "rs" in out and "no_rs" in out


def test_cli_sweep_with_config_file(tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(
        "M = 12\nK = 3\naxis = power_dbm\nvalues = 10, 20\ndrops = 1\n"
        f"output_path = {tmp_path/'out.csv'}\n"
    )
    assert main(["sweep", "--config", str(cfg)]) == 0
    content = (tmp_path / "out.csv").read_text()
    assert content.startswith(",".join(CSV_COLUMNS))
    assert len(content.strip().split("\n")) == 1 + 2 * 1 * 2


def test_cli_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("rho_max = 3\n")
    assert main(["run", "--config", str(cfg)]) == 1


def test_cli_validate_refuses_small_trials():
    assert main(["validate", "--trials", "500"]) == 1


def test_cli_sweep_needs_sweep_keys(tmp_path):
    cfg = tmp_path / "plain.cfg"
    cfg.write_text("M = 8\nK = 2\n")
    assert main(["sweep", "--config", str(cfg)]) == 1


def test_cli_entrypoint_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "rssim.cli", "run", "--seed", "1", "--mode", "no_rs"],
        capture_output=True, text=True, timeout=300,
        env={**os.environ, "RSSIM_THREADS": "1"},
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith(",".join(CSV_COLUMNS))
