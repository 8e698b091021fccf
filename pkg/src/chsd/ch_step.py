"""One Cahn-Hilliard step of the decoupled scheme.

The advecting velocity is the capillarity-corrected intermediate velocity
u_bar = u^k - (tau c / rho0) phi^k grad mu^{k+1} (c = 1 in the conduit,
chi in the matrix).  Substituting it into the advection term moves a
symmetric nonnegative weighted-stiffness term (tau c / rho0) ((phi^k)^2
grad mu^{k+1}, grad v) into the mu block, so the step couples (phi, mu)
through a system that is linear in mu and cubic in phi (convex splitting:
implicit phi^3, explicit phi).  Newton with residual-increase damping.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .errors import NewtonDiverged, NonFiniteState


@dataclass
class ChState:
    phi: fem.Field
    mu: fem.Field


@dataclass
class NewtonReport:
    iterations: int
    residual: float
    converged: bool
    max_linear_residual: float = 0.0


def intermediate_velocity(disc, u_prev, phi_prev, mu_next, params, tau):
    """Pointwise u_bar at the quadrature points of both region batches.

    Returns {"conduit": (ne, nq, 2), "matrix": (ne, nq, 2)}.
    """
    uc, um = u_prev
    out = {}
    for region, u, batch, c in (("conduit", uc, disc.batch_conduit, 1.0),
                                ("matrix", um, disc.batch_matrix, params.chi)):
        gmu = mu_next.grad_at(batch)
        phi = phi_prev.at(batch)
        out[region] = u.at(batch) - (tau * c / params.rho0) * phi[..., None] * gmu
    return out


class ChSystem:
    """Nonlinear residual and Jacobian of one CH step, frozen at level k.

    Unknowns are stacked as [phi; mu].  The first block row is linear in
    both unknowns; the second carries the implicit cubic.
    """

    def __init__(self, disc, phi_prev, u_prev, params, tau, forcing=None):
        if tau <= 0.0:
            raise ValueError("tau must be positive")
        if not np.isfinite(phi_prev.coeffs).all():
            raise NonFiniteState("phi^k contains non-finite values")
        self.disc = disc
        self.params = params
        self.tau = tau
        self.phi_prev = phi_prev
        Y = disc.y
        self.n = Y.dof_count
        bw = disc.batch_whole
        self.M = disc.y_mass()
        self.K = disc.y_stiffness()

        phi_k = phi_prev.at(bw)
        if params.is_constant_mobility:
            K_M = params.m0 * self.K
        else:
            K_M = fem.assemble_bilinear(Y, Y, "weighted_stiffness",
                                        coeff=params.mobility(phi_k), batch=bw)

        K_w = sp.csr_matrix((self.n, self.n))
        b_adv = np.zeros(self.n)
        uc, um = u_prev
        for u, batch, c in ((uc, disc.batch_conduit, 1.0),
                            (um, disc.batch_matrix, params.chi)):
            phi_r = phi_prev.at(batch)
            K_w = K_w + (tau * c / params.rho0) * fem.assemble_bilinear(
                Y, Y, "weighted_stiffness", coeff=phi_r ** 2, batch=batch)
            b_adv += fem.assemble_linear(Y, "grad_source",
                                         u.at(batch) * phi_r[..., None], batch=batch)

        g1 = np.zeros(self.n)
        g2 = np.zeros(self.n)
        if forcing is not None:
            f1, f2 = forcing
            if f1 is not None:
                g1 = fem.assemble_linear(Y, "source", f1, batch=bw)
            if f2 is not None:
                g2 = fem.assemble_linear(Y, "source", f2, batch=bw)

        self.A11 = self.M / tau
        self.A12 = K_M + K_w
        self.rhs1 = self.A11 @ phi_prev.coeffs + b_adv + g1
        self.rhs2 = (params.gamma / params.epsilon) * (self.M @ phi_prev.coeffs) + g2

    def residual(self, phi, mu):
        p = self.params
        bw = self.disc.batch_whole
        phi_vals = fem.Field(self.disc.y, phi).at(bw)
        cube = fem.assemble_linear(self.disc.y, "source", phi_vals ** 3, batch=bw)
        f1 = self.A11 @ phi + self.A12 @ mu - self.rhs1
        f2 = (p.gamma / p.epsilon) * cube + (p.gamma * p.epsilon) * (self.K @ phi) \
            - self.M @ mu - self.rhs2
        return np.concatenate([f1, f2])

    def jacobian(self, phi):
        p = self.params
        bw = self.disc.batch_whole
        phi_vals = fem.Field(self.disc.y, phi).at(bw)
        W = fem.assemble_bilinear(self.disc.y, self.disc.y, "mass",
                                  coeff=3.0 * phi_vals ** 2, batch=bw)
        return sp.bmat([[self.A11, self.A12],
                        [(p.gamma / p.epsilon) * W + (p.gamma * p.epsilon) * self.K,
                         -self.M]], format="csc")


def ch_solve(disc, phi_prev, u_prev, params, tau, forcing=None, mu_guess=None,
             tol=1e-12, max_iter=50):
    """Solve the coupled (phi^{k+1}, mu^{k+1}) system.

    Parameters
    ----------
        disc : fem.Discretization
        phi_prev : phase field at time level k
        u_prev : (u_c, u_m) velocity fields at time level k
        forcing : optional (g1, g2) callables of (x, y) frozen at t^{k+1}
        mu_guess : Newton start for mu (previous mu; zero on the first step)

    Returns
    -------
        (ChState, NewtonReport); nonlinear residual inf-norm <= tol on success.
    """
    system = ChSystem(disc, phi_prev, u_prev, params, tau, forcing)
    n = system.n
    phi = phi_prev.coeffs.copy()
    mu = np.zeros(n) if mu_guess is None else mu_guess.coeffs.copy()

    F = system.residual(phi, mu)
    res = float(np.abs(F).max())
    max_lin = 0.0
    iterations = 0

    while res > tol and iterations < max_iter:
        solver = fem.LuSolver(system.jacobian(phi))
        delta = solver.solve(-F)
        max_lin = max(max_lin, solver.last_residual)

        step = 1.0
        for _ in range(9):  # halve up to 8 times on residual increase
            phi_try = phi + step * delta[:n]
            mu_try = mu + step * delta[n:]
            F_try = system.residual(phi_try, mu_try)
            res_try = float(np.abs(F_try).max())
            if np.isfinite(res_try) and res_try < res:
                break
            step *= 0.5
        phi, mu, F, res = phi_try, mu_try, F_try, res_try
        iterations += 1
        if not np.isfinite(res):
            raise NonFiniteState("Newton residual is not finite")

    report = NewtonReport(iterations, res, res <= tol, max_lin)
    if not report.converged:
        raise NewtonDiverged(
            f"residual {res:.3e} after {iterations} iterations (tol {tol:.1e})")
    state = ChState(fem.Field(disc.y, phi), fem.Field(disc.y, mu))
    return state, report
