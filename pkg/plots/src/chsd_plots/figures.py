"""Energy-decay and convergence-rate figures from the simulator's CSV files.

The CSV schemas are consumed as documented by the simulator; nothing here
imports the solver.  Slope fitting is reimplemented on purpose: the figures
double as an independent check of the rate computation, so each rendered
slope is compared against the value stored in the table's `slope` row.
"""

from dataclasses import dataclass, field

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

TIMESERIES_HEADER = ("step,time,energy_total,energy_kin_c,energy_kin_m,"
                     "energy_interfacial,dissipation,mass,newton_iters,residual")
ERROR_COLUMNS = ("err_grad_phi", "err_u_l2", "err_grad_mu", "err_symgrad_uc")
RATES_HEADER = "level,param,h,tau,status," + ",".join(ERROR_COLUMNS)

COLUMN_LABELS = {
    "err_grad_phi": "max_k ||grad e_phi||",
    "err_u_l2": "max_k ||e_u||",
    "err_grad_mu": "(tau sum ||grad e_mu||^2)^1/2",
    "err_symgrad_uc": "(tau sum ||D(e_uc)||^2)^1/2",
}


class SchemaMismatch(Exception):
    """CSV header does not match the documented schema."""


class TooFewLevels(Exception):
    """Rate plots need at least three usable ladder levels."""


@dataclass
class FigureSpec:
    """One figure request: inputs, kind, output path, cosmetics."""

    inputs: list
    kind: str  # "energy" | "rates"
    output: str
    xlabel: str = ""
    ylabel: str = ""
    guide_slopes: tuple = (1.0, 2.0)


@dataclass
class EnergyReportOut:
    violations: int
    steps: list = field(default_factory=list)


@dataclass
class RatesReportOut:
    slopes: dict
    stored_slopes: dict
    excluded_levels: int


def read_timeseries(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != TIMESERIES_HEADER:
            raise SchemaMismatch(f"{path}: unexpected header {header!r}")
        cols = header.split(",")
        rows = [dict(zip(cols, line.strip().split(","))) for line in fh if line.strip()]
    out = {c: np.array([float(r[c]) for r in rows]) for c in cols}
    if len(out["step"]) == 0:
        raise SchemaMismatch(f"{path}: no data rows")
    return out


def read_rates(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != RATES_HEADER:
            raise SchemaMismatch(f"{path}: unexpected header {header!r}")
        rows, slopes = [], {}
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            if parts[0] == "slope":
                slopes = {c: float(v) for c, v in zip(ERROR_COLUMNS, parts[5:])}
                continue
            row = {"level": int(parts[0]), "param": float(parts[1]),
                   "h": float(parts[2]), "tau": float(parts[3]), "status": parts[4]}
            row.update({c: float(v) for c, v in zip(ERROR_COLUMNS, parts[5:])})
            rows.append(row)
    return rows, slopes


def fit_slope(params, errors):
    """Least squares on log-log data; the table builder uses the same rule."""
    return float(np.polyfit(np.log(params), np.log(errors), 1)[0])


def plot_energy(csv_path, out_path, tolerance_scale=1e-12):
    """Energy vs time with monotonicity violations marked.

    A violation is a step where E grows by more than tolerance_scale * E(0).
    Returns an EnergyReportOut with the violating step indices.
    """
    data = read_timeseries(csv_path)
    t, e = data["time"], data["energy_total"]
    tol = tolerance_scale * abs(e[0]) if e[0] != 0 else tolerance_scale
    bad = [k + 1 for k in range(len(e) - 1) if e[k + 1] > e[k] + tol]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, e, "-", color="tab:blue", lw=1.5, label="total energy")
    if bad:
        ax.plot(t[bad], e[bad], "rv", ms=7,
                label=f"{len(bad)} monotonicity violation(s)")
    ax.set_xlabel("time")
    ax.set_ylabel("total energy")
    ax.set_title(f"energy decay ({len(bad)} violation(s))")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return EnergyReportOut(len(bad), bad)


def plot_rates(csv_path, out_path, guide_slopes=(1.0, 2.0)):
    """Log-log error-vs-parameter plot with refitted slopes in the legend.

    Failed ladder levels are excluded and called out in an annotation.
    Returns a RatesReportOut with the refitted slopes next to the ones the
    table stored, for cross-checking.
    """
    rows, stored = read_rates(csv_path)
    ok = [r for r in rows if r["status"] == "ok"]
    if len(ok) < 3:
        raise TooFewLevels(f"{csv_path}: {len(ok)} usable levels, need >= 3")
    params = np.array([r["param"] for r in ok])

    fig, ax = plt.subplots(figsize=(6.4, 4.6))
    slopes = {}
    for col, marker in zip(ERROR_COLUMNS, "os^d"):
        errs = np.array([r[col] for r in ok])
        if (errs <= 0).any() or not np.isfinite(errs).all():
            slopes[col] = float("nan")
            continue
        slopes[col] = fit_slope(params, errs)
        ax.loglog(params, errs, marker + "-", ms=5,
                  label=f"{COLUMN_LABELS[col]}  (slope {slopes[col]:.3f})")
    anchor = np.array([r[ERROR_COLUMNS[0]] for r in ok])
    if anchor[0] > 0:
        for g in guide_slopes:
            ref = anchor[0] * (params / params[0]) ** g
            ax.loglog(params, ref, "k--", lw=0.8, alpha=0.6)
            ax.annotate(f"slope {g:g}", (params[-1], ref[-1]), fontsize=8,
                        textcoords="offset points", xytext=(4, -4))
    failed = len(rows) - len(ok)
    if failed:
        ax.set_title(f"convergence ({failed} failed level(s) excluded)")
    else:
        ax.set_title("convergence")
    ax.set_xlabel("ladder parameter (tau or h)")
    ax.set_ylabel("error norm")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)

    return RatesReportOut(slopes, stored, failed)
