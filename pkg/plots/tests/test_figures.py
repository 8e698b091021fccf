import os
import subprocess
import sys

import numpy as np
import pytest

from chsd_plots import SchemaMismatch, TooFewLevels, plot_energy, plot_rates
from chsd_plots.figures import ERROR_COLUMNS, fit_slope
from csv_fixtures import write_rates, write_timeseries

PLOTS_SRC = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                         "src")


# --- energy figures -------------------------------------------------------------

def test_monotone_series_no_violations(tmp_path):
    csv = write_timeseries(tmp_path / "ts.csv", np.linspace(1.0, 0.2, 40))
    out = tmp_path / "fig.png"
    report = plot_energy(csv, str(out))
    assert report.violations == 0
    assert out.stat().st_size > 1000


def test_constant_series_no_violations(tmp_path):
    csv = write_timeseries(tmp_path / "ts.csv", np.full(25, 0.7))
    report = plot_energy(csv, str(tmp_path / "fig.png"))
    assert report.violations == 0


def test_single_uptick_marked(tmp_path):
    e = list(np.linspace(1.0, 0.5, 30))
    e[12] = e[11] + 0.05  # one injected uptick
    csv = write_timeseries(tmp_path / "ts.csv", e)
    report = plot_energy(csv, str(tmp_path / "fig.png"))
    assert report.violations == 1
    assert report.steps == [12]


def test_energy_schema_mismatch(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("step,energy\n0,1.0\n")
    with pytest.raises(SchemaMismatch):
        plot_energy(str(p), str(tmp_path / "fig.png"))


# --- rate figures ------------------------------------------------------------------

def test_exact_first_order_slope(tmp_path):
    hs = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    cols = {c: hs for c in ERROR_COLUMNS}
    csv = write_rates(tmp_path / "rates.csv", hs, cols)
    out = tmp_path / "fig.png"
    report = plot_rates(csv, str(out))
    for c in ERROR_COLUMNS:
        assert abs(report.slopes[c] - 1.0) < 1e-6
    assert out.stat().st_size > 1000


def test_exact_second_order_slope(tmp_path):
    hs = [0.1, 0.05, 0.025, 0.0125]
    cols = {c: [h ** 2 for h in hs] for c in ERROR_COLUMNS}
    report = plot_rates(write_rates(tmp_path / "r.csv", hs, cols),
                        str(tmp_path / "fig.png"))
    for c in ERROR_COLUMNS:
        assert abs(report.slopes[c] - 2.0) < 1e-6


def test_failed_level_excluded(tmp_path):
    hs = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    cols = {c: [h if s == "ok" else float("nan")
                for h, s in zip(hs, ["ok", "failed: solver", "ok", "ok"])]
            for c in ERROR_COLUMNS}
    csv = write_rates(tmp_path / "r.csv", hs, cols,
                      statuses=["ok", "failed: solver", "ok", "ok"])
    report = plot_rates(csv, str(tmp_path / "fig.png"))
    assert report.excluded_levels == 1
    for c in ERROR_COLUMNS:
        assert abs(report.slopes[c] - 1.0) < 1e-6  # fit uses the three ok levels


def test_too_few_levels(tmp_path):
    hs = [0.1, 0.05]
    cols = {c: hs for c in ERROR_COLUMNS}
    with pytest.raises(TooFewLevels):
        plot_rates(write_rates(tmp_path / "r.csv", hs, cols),
                   str(tmp_path / "fig.png"))


def test_refit_matches_stored_slopes(tmp_path):
    rng = np.random.default_rng(0)
    hs = [1 / 4, 1 / 8, 1 / 16, 1 / 32]
    cols = {c: [2.0 * h ** (1 + 0.05 * i) * (1 + 0.01 * rng.uniform())
                for h in hs] for i, c in enumerate(ERROR_COLUMNS)}
    csv = write_rates(tmp_path / "r.csv", hs, cols)
    report = plot_rates(csv, str(tmp_path / "fig.png"))
    for c in ERROR_COLUMNS:
        assert abs(report.slopes[c] - report.stored_slopes[c]) < 1e-9


def test_fit_slope_definition():
    hs = np.array([0.2, 0.1, 0.05])
    assert abs(fit_slope(hs, 3.0 * hs ** 1.37) - 1.37) < 1e-9


# --- CLI ------------------------------------------------------------------------------

def _run_cli(args, cwd):
    env = dict(os.environ)
    env["PYTHONPATH"] = PLOTS_SRC
    return subprocess.run([sys.executable, "-m", "chsd_plots.cli", *args],
                          capture_output=True, text=True, cwd=cwd, env=env)


def test_cli_energy(tmp_path):
    csv = write_timeseries(tmp_path / "ts.csv", np.linspace(2.0, 1.0, 10))
    r = _run_cli(["energy", csv, "-o", str(tmp_path / "fig.png")], str(tmp_path))
    assert r.returncode == 0, r.stderr
    assert "violations = 0" in r.stdout
    assert (tmp_path / "fig.png").exists()


def test_cli_rates(tmp_path):
    hs = [0.1, 0.05, 0.025]
    cols = {c: hs for c in ERROR_COLUMNS}
    csv = write_rates(tmp_path / "r.csv", hs, cols)
    r = _run_cli(["rates", csv, "-o", str(tmp_path / "fig.png")], str(tmp_path))
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "fig.png").exists()


def test_cli_bad_input_exit_code(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("nope\n")
    r = _run_cli(["energy", str(p), "-o", str(tmp_path / "fig.png")], str(tmp_path))
    assert r.returncode == 2
    r2 = _run_cli(["rates", str(tmp_path / "missing.csv"),
                   "-o", str(tmp_path / "f.png")], str(tmp_path))
    assert r2.returncode == 2
