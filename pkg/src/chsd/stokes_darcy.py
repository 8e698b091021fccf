"""Monolithic Stokes-Darcy step: one saddle-point solve for
(u_c, P_c, u_m, P_m) with BJSJ tangential friction, normal-pressure
interface coupling, capillary forcing phi^k grad mu^{k+1}, and a scalar
multiplier pinning the mean of the Darcy pressure.

Velocity-pressure and interface cross blocks are skew-symmetric, so
testing with the solution removes all pressure work; with zero capillary
force the combined kinetic energy is nonincreasing for every tau.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .errors import SingularMatrix, SingularSystem
from .mesh import GAMMA_C, GAMMA_M


@dataclass
class FluidState:
    uc: fem.Field
    pc: fem.Field
    um: fem.Field
    pm: fem.Field


def bjsj_friction_matrix(disc, phi_prev, params):
    """Interface friction on conduit-velocity DOFs: symmetric PSD with
    pointwise weight alpha_BJSJ nu(phi^k) / sqrt(tr Pi) on (u.tau)(v.tau)."""
    weight = params.alpha_bjsj / np.sqrt(np.trace(params.pi))
    nu_e = params.viscosity(fem.interface_values(phi_prev, disc.edge_batch))
    return fem.assemble_interface(disc.vc, disc.vc, "interface_tangential",
                                  coeff=weight * nu_e)


class FluidSystem:
    """Cached assembly of the monolithic system for one (params, tau).

    With constant viscosity the matrix is step-independent and the LU
    factorization is reused across the whole run.
    """

    def __init__(self, disc, params, tau):
        self.disc = disc
        self.params = params
        self.tau = tau
        vc, qc, vm, qm = disc.vc, disc.qc, disc.vm, disc.qm
        self.sizes = (vc.dof_count, qc.dof_count, vm.dof_count, qm.dof_count)
        self.Mc = fem.assemble_bilinear(vc, vc, "mass", batch=disc.batch_conduit)
        self.Mm = fem.assemble_bilinear(vm, vm, "mass", batch=disc.batch_matrix)
        self.Bc = fem.assemble_bilinear(vc, qc, "divergence", batch=disc.batch_conduit)
        self.Gm = fem.assemble_bilinear(vm, qm, "pressure_gradient", batch=disc.batch_matrix)
        self.Cint = fem.assemble_interface(vc, qm, "interface_normal_pressure")
        self.mean_qm = fem.assemble_linear(qm, "source", 1.0, batch=disc.batch_matrix)

        nc, npc, nm, npm = self.sizes
        off_um = nc + npc
        fixed = np.concatenate([vc.dofs_on(GAMMA_C),
                                off_um + vm.normal_component_dofs(GAMMA_M)])
        total = nc + npc + nm + npm + 1
        self.free = np.setdiff1d(np.arange(total), fixed)
        self.total = total
        self._lu = None
        self._lu_key = None

    def _a_blocks(self, phi_prev):
        disc, params = self.disc, self.params
        nu_c = params.viscosity(phi_prev.at(disc.batch_conduit))
        Ac = fem.assemble_bilinear(disc.vc, disc.vc, "symmetric_gradient",
                                   coeff=nu_c, batch=disc.batch_conduit)
        Ac = Ac + bjsj_friction_matrix(disc, phi_prev, params)
        nu_m = params.viscosity(phi_prev.at(disc.batch_matrix))
        Am = fem.assemble_bilinear(disc.vm, disc.vm, "mass", coeff=nu_m,
                                   tensor=np.linalg.inv(params.pi),
                                   batch=disc.batch_matrix)
        return Ac, Am

    def monolithic_matrix(self, phi_prev):
        """Unreduced block matrix (rows/cols: u_c, p_c, u_m, p_m, multiplier)."""
        params, tau = self.params, self.tau
        wc, wm = params.rho0 / tau, params.rho0 / (params.chi * tau)
        Ac, Am = self._a_blocks(phi_prev)
        mcol = sp.csr_matrix(self.mean_qm[:, None])
        return sp.bmat([
            [wc * self.Mc + Ac, -self.Bc, None, self.Cint, None],
            [self.Bc.T, None, None, None, None],
            [None, None, wm * self.Mm + Am, self.Gm, None],
            [-self.Cint.T, None, -self.Gm.T, None, mcol],
            [None, None, None, mcol.T, None]], format="csr")

    def _solver(self, phi_prev):
        """Reduced-system LU; cached while the viscosity field is constant."""
        key = "const" if self.params.is_constant_viscosity else None
        if key is not None and self._lu is not None and self._lu_key == key:
            return self._lu
        A = self.monolithic_matrix(phi_prev)
        try:
            lu = fem.LuSolver(A[self.free][:, self.free].tocsc())
        except SingularMatrix as exc:
            raise SingularSystem(f"monolithic fluid system is singular: {exc}") from exc
        self._lu = lu
        self._lu_key = key
        return lu

    def _capillary(self, phi_prev, mu_next):
        disc = self.disc
        loads = []
        for space, batch in ((disc.vc, disc.batch_conduit), (disc.vm, disc.batch_matrix)):
            vals = phi_prev.at(batch)[..., None] * mu_next.grad_at(batch)
            loads.append(fem.assemble_linear(space, "source", vals, batch=batch))
        return loads

    def solve(self, phi_prev, mu_next, u_prev, forcing=None):
        """One fluid step; returns (FluidState, linear solver residual)."""
        disc, params, tau = self.disc, self.params, self.tau
        nc, npc, nm, npm = self.sizes
        cap_c, cap_m = self._capillary(phi_prev, mu_next)
        rhs_uc = (params.rho0 / tau) * (self.Mc @ u_prev.uc.coeffs) - cap_c
        rhs_um = (params.rho0 / (params.chi * tau)) * (self.Mm @ u_prev.um.coeffs) - cap_m
        if forcing is not None:
            rhs_uc += fem.assemble_linear(disc.vc, "source", forcing.f_c,
                                          batch=disc.batch_conduit)
            rhs_uc += fem.assemble_interface_linear(disc.vc, "normal_source", forcing.g_n)
            rhs_uc += fem.assemble_interface_linear(disc.vc, "tangent_source", forcing.g_tau)
            rhs_um += fem.assemble_linear(disc.vm, "source", forcing.f_m,
                                          batch=disc.batch_matrix)
        rhs = np.concatenate([rhs_uc, np.zeros(npc), rhs_um, np.zeros(npm + 1)])

        lu = self._solver(phi_prev)
        try:
            x_free = lu.solve(rhs[self.free])
        except SingularMatrix as exc:
            raise SingularSystem(str(exc)) from exc
        x = np.zeros(self.total)
        x[self.free] = x_free
        state = FluidState(
            fem.Field(disc.vc, x[:nc]),
            fem.Field(disc.qc, x[nc:nc + npc]),
            fem.Field(disc.vm, x[nc + npc:nc + npc + nm]),
            fem.Field(disc.qm, x[nc + npc + nm:nc + npc + nm + npm]))
        return state, lu.last_residual

    def project_initial_velocity(self, u0_c, u0_m):
        """Constrained L2 projection of (u0_c, u0_m) onto the discretely
        divergence-free velocity pair (the t = 0 velocity projection).

        The saddle-point structure (b-forms, interface coupling, mean
        multiplier) is kept; the viscous/drag forms and the time-derivative
        weights are replaced by plain rho0- and rho0/chi-weighted masses.
        """
        disc, params = self.disc, self.params
        nc, npc, nm, npm = self.sizes
        mcol = sp.csr_matrix(self.mean_qm[:, None])
        Z = None
        A = sp.bmat([
            [params.rho0 * self.Mc, -self.Bc, Z, self.Cint, Z],
            [self.Bc.T, Z, Z, Z, Z],
            [Z, Z, (params.rho0 / params.chi) * self.Mm, self.Gm, Z],
            [-self.Cint.T, Z, -self.Gm.T, Z, mcol],
            [Z, Z, Z, mcol.T, Z]], format="csr")
        rhs_uc = params.rho0 * fem.assemble_linear(disc.vc, "source", u0_c,
                                                   batch=disc.batch_conduit)
        rhs_um = (params.rho0 / params.chi) * fem.assemble_linear(
            disc.vm, "source", u0_m, batch=disc.batch_matrix)
        rhs = np.concatenate([rhs_uc, np.zeros(npc), rhs_um, np.zeros(npm + 1)])
        try:
            lu = fem.LuSolver(A[self.free][:, self.free].tocsc())
            x_free = lu.solve(rhs[self.free])
        except SingularMatrix as exc:
            raise SingularSystem(f"initial projection failed: {exc}") from exc
        x = np.zeros(self.total)
        x[self.free] = x_free
        return fem.Field(disc.vc, x[:nc]), fem.Field(disc.vm, x[nc + npc:nc + npc + nm])


def fluid_solve(disc, phi_prev, mu_next, u_prev, params, tau, forcing=None):
    """Single uncached fluid step (the scheme keeps a FluidSystem instead)."""
    return FluidSystem(disc, params, tau).solve(phi_prev, mu_next, u_prev, forcing)
