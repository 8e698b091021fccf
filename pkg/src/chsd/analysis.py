"""Discrete norms and operators, energy/dissipation audits, projections,
the Gagliardo-Nirenberg probe, and convergence-rate studies."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .errors import NotMeanZero, ProjectionFailed, SingularMass, SingularMatrix, ZeroField


@dataclass
class EnergyReport:
    kinetic_conduit: float
    kinetic_matrix: float
    interfacial: float
    total: float
    dissipation: float


class DiscreteOperators:
    """Mass/stiffness machinery on the phase space: discrete Laplacian,
    inverse-Laplacian operator and its -1,h norm, Ritz projection."""

    def __init__(self, disc):
        self.disc = disc
        self.M = disc.y_mass()
        self.K = disc.y_stiffness()
        self.mean_vec = disc.y_mean_vector()
        self._mass_lu = None
        self._aug_lu = None

    def _mass_solver(self):
        if self._mass_lu is None:
            try:
                self._mass_lu = fem.LuSolver(self.M)
            except SingularMatrix as exc:
                raise SingularMass(str(exc)) from exc
        return self._mass_lu

    def _augmented_solver(self):
        # [[K, m], [m^T, 0]] pins the constant nullvector of the Neumann stiffness
        if self._aug_lu is None:
            m = sp.csr_matrix(self.mean_vec[:, None])
            A = sp.bmat([[self.K, m], [m.T, None]], format="csc")
            try:
                self._aug_lu = fem.LuSolver(A)
            except SingularMatrix as exc:
                raise ProjectionFailed(str(exc)) from exc
        return self._aug_lu

    def mean(self, v):
        """(v, 1) for a phase-space field."""
        return float(self.mean_vec @ v.coeffs)

    def discrete_laplacian(self, v):
        """Field z with (z, xi) = -(grad v, grad xi) for all xi; mean-zero."""
        rhs = -(self.K @ v.coeffs)
        return fem.Field(self.disc.y, self._mass_solver().solve(rhs))

    def t_h(self, z):
        """Inverse-Laplacian operator: (grad T_h z, grad xi) = (z, xi) on mean-zero xi."""
        if abs(self.mean(z)) > 1e-10:
            raise NotMeanZero(f"(z, 1) = {self.mean(z):.3e}")
        rhs = np.concatenate([self.M @ z.coeffs, [0.0]])
        sol = self._augmented_solver().solve(rhs)
        return fem.Field(self.disc.y, sol[:-1])

    def neg_one_h_norm(self, z):
        """|| z ||_{-1,h} = || grad T_h(z) ||."""
        x = self.t_h(z).coeffs
        return float(np.sqrt(max(x @ (self.K @ x), 0.0)))

    def ritz_project(self, f, grad_f):
        """H1 projection with mean matching: (grad(Pf - f), grad v) = 0, (Pf - f, 1) = 0.

        `f` and `grad_f` are callables of (x, y); grad_f returns two components.
        """
        batch = self.disc.batch_whole
        g = fem.assemble_linear(self.disc.y, "grad_source",
                                _vector_callable(grad_f), batch=batch)
        x, y = batch.points[..., 0], batch.points[..., 1]
        total = float(np.einsum("eq,eq->", batch.scaled_weights(),
                                np.asarray(f(x, y), dtype=float)))
        rhs = np.concatenate([g, [total]])
        sol = self._augmented_solver().solve(rhs)
        return fem.Field(self.disc.y, sol[:-1])

    def ritz_project_field(self, v):
        """Ritz projection of an existing phase-space field (idempotence check)."""
        rhs = np.concatenate([self.K @ v.coeffs, [self.mean(v)]])
        sol = self._augmented_solver().solve(rhs)
        return fem.Field(self.disc.y, sol[:-1])


def _vector_callable(grad_f):
    def vals(x, y):
        gx, gy = grad_f(x, y)
        return np.stack([np.broadcast_to(gx, x.shape),
                         np.broadcast_to(gy, x.shape)], axis=-1)
    return vals


def _l2sq(batch, values):
    if values.ndim == 3:
        values = (values ** 2).sum(axis=-1)
    else:
        values = values ** 2
    return fem.integrate(batch, values)


def sym_grad(grad):
    """Symmetric part of a velocity gradient array (..., 2, 2)."""
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def energy(state, params, disc):
    """Total energy (kinetic + interfacial parts) and the dissipation rate."""
    bc, bm, bw = disc.batch_conduit, disc.batch_matrix, disc.batch_whole
    uc, um = state.uc, state.um

    kin_c = 0.5 * params.rho0 * _l2sq(bc, uc.at(bc))
    kin_m = 0.5 * params.rho0 / params.chi * _l2sq(bm, um.at(bm))

    phi_v = state.phi.at(bw)
    gphi = state.phi.grad_at(bw)
    F = 0.25 * (phi_v ** 2 - 1.0) ** 2
    interfacial = params.gamma * fem.integrate(
        bw, 0.5 * params.epsilon * (gphi ** 2).sum(axis=-1) + F / params.epsilon)

    # dissipation rate: Darcy drag + viscous + chemical + interface friction
    pi_inv = np.linalg.inv(params.pi)
    um_v = um.at(bm)
    nu_m = params.viscosity(state.phi.at(bm))
    darcy = fem.integrate(bm, nu_m * np.einsum("eqa,ab,eqb->eq", um_v, pi_inv, um_v))

    Duc = sym_grad(uc.grad_at(bc))
    nu_c = params.viscosity(state.phi.at(bc))
    viscous = fem.integrate(bc, 2.0 * nu_c * (Duc ** 2).sum(axis=(-1, -2)))

    gmu = state.mu.grad_at(bw)
    chem = fem.integrate(bw, params.mobility(phi_v) * (gmu ** 2).sum(axis=-1))

    eb = disc.edge_batch
    uct = np.einsum("eqa,ea->eq", fem.interface_values(uc, eb), eb.tangents)
    nu_e = params.viscosity(fem.interface_values(state.phi, eb))
    friction = float(np.einsum(
        "eq,eq->", eb.scaled_weights(),
        params.alpha_bjsj * nu_e / np.sqrt(np.trace(params.pi)) * uct ** 2))

    total = kin_c + kin_m + interfacial
    return EnergyReport(kin_c, kin_m, interfacial, total,
                        darcy + viscous + chem + friction)


def gn_probe(v, ops):
    """Ratio ||v||_inf / (||Lap_h v||^(1/4) ||v||_L6^(3/4) + ||v||_L6), d = 2.

    The sup norm is taken over DOF values and quadrature points.
    """
    bw = ops.disc.batch_whole
    vals = v.at(bw)
    vinf = max(np.abs(v.coeffs).max(), np.abs(vals).max())
    l6 = fem.integrate(bw, vals ** 6) ** (1.0 / 6.0)
    if l6 <= 0.0:
        raise ZeroField("L6 norm is zero")
    lap = ops.discrete_laplacian(v)
    lap_l2 = float(np.sqrt(max(lap.coeffs @ (ops.M @ lap.coeffs), 0.0)))
    l2 = float(np.sqrt(max(v.coeffs @ (ops.M @ v.coeffs), 0.0)))
    if lap_l2 < 1e-10 * max(l2, 1e-300):
        lap_l2 = 0.0  # mass-solve noise; the quarter power would amplify it
    return vinf / (lap_l2 ** 0.25 * l6 ** 0.75 + l6)


def stability_diagnostics(state, ops):
    """Unbounded-constant stability quantities reported, never asserted:
    || Lap_h phi ||, || mu ||_H1, || grad Lap_h phi ||, || phi ||_H1."""
    M, K = ops.M, ops.K
    lap = ops.discrete_laplacian(state.phi)
    def l2sq(c, A):
        return float(max(c @ (A @ c), 0.0))
    return {
        "lap_phi_l2": np.sqrt(l2sq(lap.coeffs, M)),
        "mu_h1": np.sqrt(l2sq(state.mu.coeffs, M) + l2sq(state.mu.coeffs, K)),
        "grad_lap_phi_l2": np.sqrt(l2sq(lap.coeffs, K)),
        "phi_h1": np.sqrt(l2sq(state.phi.coeffs, M) + l2sq(state.phi.coeffs, K)),
    }


class ErrorProbe:
    """Accumulates the energy-norm errors of a run against exact fields."""

    def __init__(self, disc, exact):
        self.disc = disc
        self.exact = exact
        self.max_grad_phi = 0.0
        self.max_u_l2 = 0.0
        self.sum_grad_mu_sq = 0.0
        self.sum_symgrad_uc_sq = 0.0
        self.steps = 0

    def observe(self, step, state, tau):
        if step == 0:
            return
        bw, bc, bm = self.disc.batch_whole, self.disc.batch_conduit, self.disc.batch_matrix
        t = state.t
        ex = self.exact

        e = state.phi.grad_at(bw) - ex.grad_phi(bw.points, t)
        self.max_grad_phi = max(self.max_grad_phi, np.sqrt(_l2sq(bw, e)))

        eu = _l2sq(bc, state.uc.at(bc) - ex.u_c(bc.points, t))
        eu += _l2sq(bm, state.um.at(bm) - ex.u_m(bm.points, t))
        self.max_u_l2 = max(self.max_u_l2, np.sqrt(eu))

        emu = state.mu.grad_at(bw) - ex.grad_mu(bw.points, t)
        self.sum_grad_mu_sq += tau * _l2sq(bw, emu)

        eD = sym_grad(state.uc.grad_at(bc)) - sym_grad(ex.grad_u_c(bc.points, t))
        self.sum_symgrad_uc_sq += tau * fem.integrate(bc, (eD ** 2).sum(axis=(-1, -2)))
        self.steps += 1

    def results(self):
        return {
            "err_grad_phi": self.max_grad_phi,
            "err_u_l2": self.max_u_l2,
            "err_grad_mu": np.sqrt(self.sum_grad_mu_sq),
            "err_symgrad_uc": np.sqrt(self.sum_symgrad_uc_sq),
        }


ERROR_COLUMNS = ("err_grad_phi", "err_u_l2", "err_grad_mu", "err_symgrad_uc")


@dataclass
class ErrorTable:
    """Per-level error norms of a refinement ladder with fitted log-log slopes."""

    ladder: str                      # "temporal" | "spatial"
    levels: list = field(default_factory=list)   # dicts: level, param, h, tau, status, errors
    slopes: dict = field(default_factory=dict)

    def add_level(self, param, h, tau, errors, status="ok"):
        row = {"level": len(self.levels), "param": param, "h": h, "tau": tau,
               "status": status}
        row.update({c: errors.get(c, float("nan")) for c in ERROR_COLUMNS})
        self.levels.append(row)

    def fit_slopes(self):
        self.slopes = fit_slopes([r["param"] for r in self.levels if r["status"] == "ok"],
                                 [{c: r[c] for c in ERROR_COLUMNS}
                                  for r in self.levels if r["status"] == "ok"])
        return self.slopes


def fit_slopes(params, error_rows):
    """Least-squares slope of log(err) vs log(param) per error column.

    Columns with nonpositive entries (exact data) come back NaN: flagged,
    not fitted.
    """
    out = {}
    p = np.asarray(params, dtype=float)
    for c in ERROR_COLUMNS:
        e = np.array([row[c] for row in error_rows], dtype=float)
        if len(e) < 3 or (e <= 1e-14).any() or not np.isfinite(e).all():
            out[c] = float("nan")
            continue
        out[c] = float(np.polyfit(np.log(p), np.log(e), 1)[0])
    return out


def convergence_study(config, ladder="temporal", levels=4):
    """Run an MMS refinement ladder and fit convergence slopes.

    Temporal: fixed mesh from the config, tau halved per level.
    Spatial: nx = ny doubled per level, tau = (1/nx)/10.
    """
    from . import scheme  # deferred: scheme drives the runs

    if levels < 3:
        raise ValueError("need at least 3 ladder levels to fit slopes")
    table = ErrorTable(ladder)
    for lvl in range(levels):
        cfg = config.replace()
        if ladder == "temporal":
            cfg.tau = config.tau / 2 ** lvl
            cfg.num_steps = int(round(config.tau * config.num_steps / cfg.tau))
            param = cfg.tau
        elif ladder == "spatial":
            cfg.nx = config.nx * 2 ** lvl
            cfg.ny = config.ny * 2 ** lvl
            cfg.tau = (1.0 / cfg.nx) / 10.0
            cfg.num_steps = int(round(config.tau * config.num_steps / cfg.tau))
            param = 1.0 / cfg.nx
        else:
            raise ValueError(f"unknown ladder {ladder!r}")
        cfg.mms = True
        traj = scheme.run(cfg)
        if traj.failure is None:
            table.add_level(param, traj.mesh_size_h, cfg.tau, traj.mms_errors)
        else:  # the failed level is marked; the table survives
            table.add_level(param, traj.mesh_size_h, cfg.tau, {},
                            status=f"failed: {traj.failure}")
    table.fit_slopes()
    return table
