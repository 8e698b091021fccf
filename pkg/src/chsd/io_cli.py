"""Configuration parsing and result serialization.

Config files are UTF-8 `key = value` lines with `#` comments.  Every float
is written back with 17 significant digits, so all files round-trip at
binary64 precision.
"""

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from .analysis import ERROR_COLUMNS
from .errors import ParseError, ValidationError
from .scheme import PhysParams

TIMESERIES_HEADER = ("step,time,energy_total,energy_kin_c,energy_kin_m,"
                     "energy_interfacial,dissipation,mass,newton_iters,residual")

STABILITY_HEADER = "step,time,lap_phi_l2,mu_h1,grad_lap_phi_l2,phi_h1"

RATES_HEADER = "level,param,h,tau,status," + ",".join(ERROR_COLUMNS)


def fmt(x):
    """17-significant-digit decimal text (binary64 round-trip)."""
    return f"{x:.17g}"


@dataclass
class RunConfig:
    nx: int = 16
    ny: int = 16
    split_y: float = 0.5
    bbox: tuple = (0.0, 0.0, 1.0, 1.0)
    refinements: int = 0
    phase_degree: int = 1
    tau: float = 1e-2
    num_steps: int = 100
    save_every: int = 1
    vtk_every: int = 0
    rho0: float = 1.0
    chi: float = 0.7
    gamma: float = 0.01
    epsilon: float = 0.1
    alpha_bjsj: float = 1.0
    pi_xx: float = 1.0
    pi_xy: float = 0.0
    pi_yy: float = 1.0
    mobility_law: str = "constant"
    m0: float = 1.0
    m1: float = 1.0
    viscosity_law: str = "constant"
    nu0: float = 1.0
    nu1: float = 1.0
    ic: str = "spinodal"
    ic_mean: float = 0.0
    ic_amplitude: float = 0.05
    seed: int = 1234
    mms: bool = False
    mms_omega: float = 2.0 * np.pi
    mms_amp_phi: float = 0.3
    mms_amp_u: float = 1.0
    mms_amp_p: float = 1.0
    output_dir: str = "out"
    extra_diagnostics: bool = False
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    def params(self):
        return PhysParams(
            rho0=self.rho0, chi=self.chi, gamma=self.gamma, epsilon=self.epsilon,
            alpha_bjsj=self.alpha_bjsj,
            pi=np.array([[self.pi_xx, self.pi_xy], [self.pi_xy, self.pi_yy]]),
            mobility_law=self.mobility_law, m0=self.m0, m1=self.m1,
            viscosity_law=self.viscosity_law, nu0=self.nu0, nu1=self.nu1)

    def interface_height(self):
        return self.bbox[1] + self.split_y * (self.bbox[3] - self.bbox[1])

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def validate(self):
        if self.nx < 1 or self.ny < 2:
            raise ValidationError("nx/ny", "need nx >= 1 and ny >= 2")
        if not (0.0 < self.split_y < 1.0):
            raise ValidationError("split_y", "must lie strictly inside (0, 1)")
        x0, y0, x1, y1 = self.bbox
        if not (x1 > x0 and y1 > y0):
            raise ValidationError("bbox", "extent must be positive")
        if self.refinements < 0:
            raise ValidationError("refinements", "must be nonnegative")
        if self.phase_degree not in (1, 2):
            raise ValidationError("phase_degree", "must be 1 or 2")
        if self.tau <= 0.0:
            raise ValidationError("tau", "must be positive")
        if self.num_steps < 0:
            raise ValidationError("num_steps", "must be nonnegative")
        if self.save_every < 1:
            raise ValidationError("save_every", "must be >= 1")
        if self.vtk_every < 0:
            raise ValidationError("vtk_every", "must be nonnegative")
        if self.chi <= 0.0 or self.chi > 1.0:
            raise ValidationError("chi", "porosity must lie in (0, 1]")
        for key in ("rho0", "gamma", "epsilon", "m0", "m1", "nu0", "nu1"):
            if getattr(self, key) <= 0.0:
                raise ValidationError(key, "must be positive")
        if self.alpha_bjsj < 0.0:
            raise ValidationError("alpha_bjsj", "must be nonnegative")
        if self.m0 > self.m1:
            raise ValidationError("m0/m1", "need m0 <= m1")
        if self.nu0 > self.nu1:
            raise ValidationError("nu0/nu1", "need nu0 <= nu1")
        pi = np.array([[self.pi_xx, self.pi_xy], [self.pi_xy, self.pi_yy]])
        if np.linalg.eigvalsh(pi).min() <= 0.0:
            raise ValidationError("pi", "permeability must be positive definite")
        if self.mobility_law not in ("constant", "quadratic"):
            raise ValidationError("mobility_law", "constant or quadratic")
        if self.viscosity_law not in ("constant", "quadratic"):
            raise ValidationError("viscosity_law", "constant or quadratic")
        if self.ic not in ("spinodal", "constant"):
            raise ValidationError("ic", "spinodal or constant")
        if self.ic == "spinodal" and self.ic_amplitude < 0.0:
            raise ValidationError("ic_amplitude", "must be nonnegative")
        if self.newton_tol <= 0.0:
            raise ValidationError("newton_tol", "must be positive")
        if self.newton_max_iter < 1:
            raise ValidationError("newton_max_iter", "must be >= 1")
        return self


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(key, raw, line_no):
    kind = _FIELD_TYPES[key]
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("on", "true", "1", "yes"):
                return True
            if low in ("off", "false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is tuple:
            parts = raw.replace(",", " ").split()
            if len(parts) != 4:
                raise ValueError("bbox needs 4 numbers: x0 y0 x1 y1")
            return tuple(float(p) for p in parts)
        return raw
    except ValueError as exc:
        raise ParseError(line_no, f"{key}: {exc}") from exc


def parse_config(text):
    """Parse `key = value` config text into a validated RunConfig."""
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(line_no, f"expected `key = value`, got {line!r}")
        key, raw = (p.strip() for p in body.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValidationError(key, "unknown key")
        values[key] = _parse_value(key, raw, line_no)
    return RunConfig(**values).validate()


def serialize_config(config):
    lines = []
    for f in dataclasses.fields(RunConfig):
        v = getattr(config, f.name)
        if f.type is float:
            lines.append(f"{f.name} = {fmt(v)}")
        elif f.type is tuple:
            lines.append(f"{f.name} = " + " ".join(fmt(c) for c in v))
        elif f.type is bool:
            lines.append(f"{f.name} = {'on' if v else 'off'}")
        else:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def output_dir(config):
    """Configured output directory; the CHSD_OUT variable overrides it."""
    return os.environ.get("CHSD_OUT", config.output_dir)


# --- time series ----------------------------------------------------------

def write_timeseries_csv(trajectory, path):
    if not trajectory.diagnostics:
        raise ValueError("trajectory has no diagnostics rows")
    lines = [TIMESERIES_HEADER]
    for row in trajectory.diagnostics:
        lines.append(",".join([
            str(row["step"]), fmt(row["time"]), fmt(row["energy_total"]),
            fmt(row["energy_kin_c"]), fmt(row["energy_kin_m"]),
            fmt(row["energy_interfacial"]), fmt(row["dissipation"]),
            fmt(row["mass"]), str(row["newton_iters"]), fmt(row["residual"]),
        ]))
    _write(path, "\n".join(lines) + "\n")
    return path


def read_timeseries_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != TIMESERIES_HEADER:
            raise ValueError(f"unexpected timeseries header: {header!r}")
        cols = header.split(",")
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            row = dict(zip(cols, parts))
            for k in cols:
                row[k] = int(row[k]) if k in ("step", "newton_iters") else float(row[k])
            rows.append(row)
    return rows


def write_stability_csv(trajectory, path):
    """Optional stability columns (reported, never asserted against bounds)."""
    rows = [r for r in trajectory.diagnostics if "lap_phi_l2" in r]
    lines = [STABILITY_HEADER]
    for row in rows:
        lines.append(",".join([str(row["step"]), fmt(row["time"]),
                               fmt(row["lap_phi_l2"]), fmt(row["mu_h1"]),
                               fmt(row["grad_lap_phi_l2"]), fmt(row["phi_h1"])]))
    _write(path, "\n".join(lines) + "\n")
    return path


def read_stability_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != STABILITY_HEADER:
            raise ValueError(f"unexpected stability header: {header!r}")
        cols = header.split(",")
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            row = dict(zip(cols, parts))
            for k in cols:
                row[k] = int(row[k]) if k == "step" else float(row[k])
            rows.append(row)
    return rows


# --- error tables ----------------------------------------------------------

def write_error_table_csv(table, path):
    lines = [RATES_HEADER]
    for row in table.levels:
        lines.append(",".join(
            [str(row["level"]), fmt(row["param"]), fmt(row["h"]), fmt(row["tau"]),
             row["status"]] + [fmt(row[c]) for c in ERROR_COLUMNS]))
    slopes = table.slopes or {}
    lines.append(",".join(
        ["slope", "", "", "", "fit"] + [fmt(slopes.get(c, float("nan")))
                                        for c in ERROR_COLUMNS]))
    _write(path, "\n".join(lines) + "\n")
    return path


def read_error_table_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != RATES_HEADER:
            raise ValueError(f"unexpected rates header: {header!r}")
        rows, slopes = [], {}
        for line in fh:
            parts = line.strip().split(",")
            if parts[0] == "slope":
                slopes = {c: float(v) for c, v in zip(ERROR_COLUMNS, parts[5:])}
                continue
            row = {"level": int(parts[0]), "param": float(parts[1]),
                   "h": float(parts[2]), "tau": float(parts[3]), "status": parts[4]}
            row.update({c: float(v) for c, v in zip(ERROR_COLUMNS, parts[5:])})
            rows.append(row)
    return rows, slopes


# --- VTK -------------------------------------------------------------------

def _vertex_values(field, num_vertices):
    """Field values at mesh vertices (vertex nodes of P1/P2 spaces)."""
    space = field.space
    arity = space.arity
    out = np.zeros((num_vertices, arity))
    for v, node in space.node_of_vertex.items():
        for a in range(arity):
            out[v, a] = field.coeffs[arity * node + a]
    return out, np.array(sorted(space.node_of_vertex), dtype=int)


def write_vtk(state, mesh, path):
    """Legacy ASCII VTK dump of one state.

    Pressure and velocity are stitched: conduit values where the conduit
    space has a vertex (interface included), matrix values elsewhere,
    zero at vertices outside both (none on these meshes).
    """
    nv = mesh.num_vertices
    phi, _ = _vertex_values(state.phi, nv)
    mu, _ = _vertex_values(state.mu, nv)
    pm, idx_m = _vertex_values(state.pm, nv)
    pc, idx_c = _vertex_values(state.pc, nv)
    um, _ = _vertex_values(state.um, nv)
    uc, _ = _vertex_values(state.uc, nv)
    p = np.zeros(nv)
    u = np.zeros((nv, 2))
    p[idx_m] = pm[idx_m, 0]
    p[idx_c] = pc[idx_c, 0]
    u[idx_m] = um[idx_m]
    u[idx_c] = uc[idx_c]

    lines = ["# vtk DataFile Version 3.0", "chsd state", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{fmt(x)} {fmt(y)} 0" for x, y in mesh.vertices]
    nt = mesh.num_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"POINT_DATA {nv}")
    for name, vals in (("phi", phi[:, 0]), ("mu", mu[:, 0]), ("p", p)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [fmt(v) for v in vals]
    lines.append("VECTORS u double")
    lines += [f"{fmt(a)} {fmt(b)} 0" for a, b in u]
    _write(path, "\n".join(lines) + "\n")
    return path


def read_vtk(path):
    """Reader for the legacy ASCII files this package writes."""
    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().split("\n")
    i = tokens.index("DATASET UNSTRUCTURED_GRID") + 1
    assert tokens[i].startswith("POINTS")
    nv = int(tokens[i].split()[1])
    points = np.array([[float(c) for c in tokens[i + 1 + k].split()] for k in range(nv)])
    i += 1 + nv
    nt = int(tokens[i].split()[1])
    cells = np.array([[int(c) for c in tokens[i + 1 + k].split()[1:]] for k in range(nt)])
    i += 1 + nt
    assert tokens[i].startswith("CELL_TYPES")
    i += 1 + nt
    assert tokens[i].startswith("POINT_DATA")
    i += 1
    data = {}
    while i < len(tokens) and tokens[i]:
        head = tokens[i].split()
        if head[0] == "SCALARS":
            name = head[1]
            i += 2  # skip LOOKUP_TABLE
            data[name] = np.array([float(tokens[i + k]) for k in range(nv)])
            i += nv
        elif head[0] == "VECTORS":
            name = head[1]
            i += 1
            data[name] = np.array([[float(c) for c in tokens[i + k].split()]
                                   for k in range(nv)])
            i += nv
        else:
            break
    return points[:, :2], cells, data


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
