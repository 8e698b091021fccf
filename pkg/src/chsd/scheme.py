"""Time-stepping orchestrator: initialization by projection, then per step
one Cahn-Hilliard solve followed by one coupled Stokes-Darcy solve."""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import analysis, ch_step, fem, mesh as mesh_mod, stokes_darcy
from .errors import ChsdError


@dataclass
class PhysParams:
    """Physical parameters and the mobility/viscosity laws.

    The laws are `constant` (value m0 / nu0) or `quadratic`:
    m0 + (m1 - m0) * clamp(1 - phi^2, 0, 1), which honors the bounds
    m0 <= M(phi) <= m1 while exercising variable-coefficient assembly.
    """

    rho0: float = 1.0
    chi: float = 0.7
    gamma: float = 0.01
    epsilon: float = 0.1
    alpha_bjsj: float = 1.0
    pi: np.ndarray = field(default_factory=lambda: np.eye(2))
    mobility_law: str = "constant"
    m0: float = 1.0
    m1: float = 1.0
    viscosity_law: str = "constant"
    nu0: float = 1.0
    nu1: float = 1.0

    def validate(self):
        for name in ("rho0", "chi", "gamma", "epsilon", "m0", "m1", "nu0", "nu1"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.alpha_bjsj < 0.0:
            raise ValueError("alpha_bjsj must be nonnegative")
        if self.chi > 1.0:
            raise ValueError("porosity chi must lie in (0, 1]")
        if self.m0 > self.m1 or self.nu0 > self.nu1:
            raise ValueError("law bounds must satisfy m0 <= m1 and nu0 <= nu1")
        pi = np.asarray(self.pi, dtype=float)
        if pi.shape != (2, 2) or abs(pi[0, 1] - pi[1, 0]) > 1e-14:
            raise ValueError("permeability must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(pi).min() <= 0.0:
            raise ValueError("permeability must be positive definite")
        if self.mobility_law not in ("constant", "quadratic"):
            raise ValueError(f"unknown mobility law {self.mobility_law!r}")
        if self.viscosity_law not in ("constant", "quadratic"):
            raise ValueError(f"unknown viscosity law {self.viscosity_law!r}")
        return self

    def _law(self, law, lo, hi, values):
        if law == "constant":
            return np.full_like(np.asarray(values, dtype=float), lo)
        return lo + (hi - lo) * np.clip(1.0 - np.asarray(values) ** 2, 0.0, 1.0)

    def mobility(self, values):
        return self._law(self.mobility_law, self.m0, self.m1, values)

    def viscosity(self, values):
        return self._law(self.viscosity_law, self.nu0, self.nu1, values)

    @property
    def is_constant_mobility(self):
        return self.mobility_law == "constant" or self.m0 == self.m1

    @property
    def is_constant_viscosity(self):
        return self.viscosity_law == "constant" or self.nu0 == self.nu1


@dataclass
class FieldSet:
    """Discrete state at one time level."""

    phi: fem.Field
    mu: fem.Field
    uc: fem.Field
    pc: fem.Field
    um: fem.Field
    pm: fem.Field
    t: float = 0.0

    def copy(self):
        return FieldSet(self.phi.copy(), self.mu.copy(), self.uc.copy(),
                        self.pc.copy(), self.um.copy(), self.pm.copy(), self.t)


@dataclass
class Trajectory:
    tau: float
    num_steps: int
    mesh_size_h: float
    diagnostics: list = field(default_factory=list)
    states: list = field(default_factory=list)
    final_state: FieldSet = None
    mms_errors: dict = None
    failure: str = None


def _zero_state(disc):
    return FieldSet(fem.Field(disc.y), fem.Field(disc.y), fem.Field(disc.vc),
                    fem.Field(disc.qc), fem.Field(disc.vm), fem.Field(disc.qm))


def initialize(disc, params, phi0=None, grad_phi0=None, u0_c=None, u0_m=None,
               ops=None, fluid_system=None):
    """Initial state: phi by Ritz projection, velocities by the constrained
    L2 projection onto the discretely divergence-free pair; mu and the
    pressures start at zero."""
    state = _zero_state(disc)
    if phi0 is not None:
        ops = ops or analysis.DiscreteOperators(disc)
        state.phi = ops.ritz_project(phi0, grad_phi0)
    if u0_c is not None or u0_m is not None:
        fs = fluid_system or stokes_darcy.FluidSystem(disc, params, tau=1.0)
        state.uc, state.um = fs.project_initial_velocity(
            u0_c or (lambda x, y: np.zeros(x.shape + (2,))),
            u0_m or (lambda x, y: np.zeros(x.shape + (2,))))
    return state


def initialize_from_coeffs(disc, phi_coeffs):
    """Initial state from existing phase-space coefficients (noise ICs);
    velocities zero (the projection of zero is zero)."""
    state = _zero_state(disc)
    state.phi = fem.Field(disc.y, np.asarray(phi_coeffs, dtype=float).copy())
    return state


def spinodal_coeffs(disc, mean, amplitude, seed):
    """Seeded uniform noise in [mean - amplitude, mean + amplitude] per DOF."""
    rng = np.random.default_rng(seed)
    return mean + amplitude * rng.uniform(-1.0, 1.0, disc.y.dof_count)


def step(disc, params, state, tau, fluid_system=None, ch_forcing=None,
         fluid_forcing=None, newton_tol=1e-12, newton_max_iter=50):
    """Advance one time level: CH solve, then the Stokes-Darcy solve fed by
    the freshly computed mu^{k+1} (checksum-threaded)."""
    fs = fluid_system or stokes_darcy.FluidSystem(disc, params, tau)
    chs, report = ch_step.ch_solve(disc, state.phi, (state.uc, state.um), params,
                                   tau, forcing=ch_forcing, mu_guess=state.mu,
                                   tol=newton_tol, max_iter=newton_max_iter)
    token = hashlib.sha256(chs.mu.coeffs.tobytes()).hexdigest()
    fluid, fluid_residual = fs.solve(state.phi, chs.mu, state, forcing=fluid_forcing)
    if hashlib.sha256(chs.mu.coeffs.tobytes()).hexdigest() != token:
        raise ChsdError("mu^{k+1} mutated between the CH and fluid solves")
    new = FieldSet(chs.phi, chs.mu, fluid.uc, fluid.pc, fluid.um, fluid.pm,
                   state.t + tau)
    diag = {
        "newton_iters": report.iterations,
        "newton_residual": report.residual,
        "residual": max(report.max_linear_residual, fluid_residual),
        "mu_checksum": token,
    }
    return new, diag


def run(config):
    """Execute a configured run; returns a Trajectory with per-step audits.

    `config` carries the mesh/time/physics fields of io_cli.RunConfig.
    Deterministic for a fixed config and seed.  On a solver failure the
    partial trajectory is returned with `failure` set.
    """
    params = config.params().validate()
    m = mesh_mod.build_karst_mesh(config.nx, config.ny, config.split_y, config.bbox)
    for _ in range(config.refinements):
        m = mesh_mod.refine_uniform(m)
    disc = fem.Discretization(m, config.phase_degree)
    ops = analysis.DiscreteOperators(disc)
    fs = stokes_darcy.FluidSystem(disc, params, config.tau)

    mms_case = None
    probe = None
    if config.mms:
        from . import mms
        mms_case = mms.TrigMms(params, config.bbox, config.interface_height(),
                               omega=config.mms_omega, amp_phi=config.mms_amp_phi,
                               amp_u=config.mms_amp_u, amp_p=config.mms_amp_p)
        state = initialize(disc, params, mms_case.phi0, mms_case.grad_phi0,
                           mms_case.u0_c, mms_case.u0_m, ops=ops, fluid_system=fs)
        probe = analysis.ErrorProbe(disc, mms_case.exact)
    elif config.ic == "spinodal":
        state = initialize_from_coeffs(
            disc, spinodal_coeffs(disc, config.ic_mean, config.ic_amplitude, config.seed))
    elif config.ic == "constant":
        c = config.ic_mean
        state = initialize(disc, params, lambda x, y: np.full_like(x, c),
                           lambda x, y: (np.zeros_like(x), np.zeros_like(x)),
                           ops=ops, fluid_system=fs)
    else:
        raise ValueError(f"unknown initial condition {config.ic!r}")

    traj = Trajectory(config.tau, config.num_steps, m.mesh_size_h)
    row0 = _diag_row(0, state, params, disc, ops,
                     {"newton_iters": 0, "newton_residual": 0.0, "residual": 0.0})
    if config.extra_diagnostics:
        row0.update(analysis.stability_diagnostics(state, ops))
    traj.diagnostics.append(row0)
    if probe is not None:
        probe.observe(0, state, config.tau)

    for k in range(1, config.num_steps + 1):
        ch_forcing = mms_case.ch_forcing_at(state.t + config.tau) if mms_case else None
        fl_forcing = mms_case.fluid_forcing_at(state.t + config.tau) if mms_case else None
        try:
            state, diag = step(disc, params, state, config.tau, fluid_system=fs,
                               ch_forcing=ch_forcing, fluid_forcing=fl_forcing,
                               newton_tol=config.newton_tol,
                               newton_max_iter=config.newton_max_iter)
        except ChsdError as exc:
            traj.failure = f"step {k}: {exc}"
            break
        if probe is not None:
            probe.observe(k, state, config.tau)
        if k % config.save_every == 0 or k == config.num_steps:
            row = _diag_row(k, state, params, disc, ops, diag)
            if config.extra_diagnostics:
                row.update(analysis.stability_diagnostics(state, ops))
            traj.diagnostics.append(row)
        if config.vtk_every and (k % config.vtk_every == 0 or k == config.num_steps):
            traj.states.append((k, state.copy()))

    traj.final_state = state
    if probe is not None and traj.failure is None:
        traj.mms_errors = probe.results()
    return traj


def _diag_row(k, state, params, disc, ops, diag):
    report = analysis.energy(state, params, disc)
    return {
        "step": k,
        "time": state.t,
        "energy_total": report.total,
        "energy_kin_c": report.kinetic_conduit,
        "energy_kin_m": report.kinetic_matrix,
        "energy_interfacial": report.interfacial,
        "dissipation": report.dissipation,
        "mass": ops.mean(state.phi),
        "newton_iters": diag["newton_iters"],
        "residual": diag["residual"],
    }
