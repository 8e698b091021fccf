"""Manufactured trigonometric solution family and its forcing terms.

The exact fields are built so every *kinematic* boundary/interface condition
holds exactly: phi and mu have vanishing normal derivatives on the outer
boundary, the velocities come from per-subdomain stream functions (hence
divergence-free) that vanish appropriately on the outer boundary and share
the normal component across the interface.  The remaining residuals (volume
momentum/CH residuals plus the two interface stress conditions) become
forcing terms: volume loads f_c, f_m, g1 and interface loads g_n, g_tau.

All derivatives are taken symbolically once at construction and lambdified.
"""

import numpy as np
import sympy as sm


def _lambdify(expr, args):
    f = sm.lambdify(args, expr, modules="numpy")

    def wrapped(*vals):
        out = f(*vals)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(vals[0])).copy()

    return wrapped


class _Exact:
    """Exact-field evaluators consumed by the error probe.

    Points arrive as (ne, nq, 2) arrays; gradients return trailing axes
    (..., 2) for scalars and (..., 2, 2) with [a, d] = d u_a / d x_d.
    """

    def __init__(self, fns):
        self._f = fns

    def _eval(self, names, points, t):
        x, y = points[..., 0], points[..., 1]
        tt = np.full_like(x, t)
        return [self._f[n](x, y, tt) for n in names]

    def phi(self, points, t):
        return self._eval(["phi"], points, t)[0]

    def grad_phi(self, points, t):
        return np.stack(self._eval(["phi_x", "phi_y"], points, t), axis=-1)

    def mu(self, points, t):
        return self._eval(["mu"], points, t)[0]

    def grad_mu(self, points, t):
        return np.stack(self._eval(["mu_x", "mu_y"], points, t), axis=-1)

    def u_c(self, points, t):
        return np.stack(self._eval(["ucx", "ucy"], points, t), axis=-1)

    def u_m(self, points, t):
        return np.stack(self._eval(["umx", "umy"], points, t), axis=-1)

    def grad_u_c(self, points, t):
        g = self._eval(["ucx_x", "ucx_y", "ucy_x", "ucy_y"], points, t)
        out = np.stack([np.stack(g[:2], axis=-1), np.stack(g[2:], axis=-1)], axis=-2)
        return out

    def p_c(self, points, t):
        return self._eval(["pc"], points, t)[0]

    def p_m(self, points, t):
        return self._eval(["pm"], points, t)[0]


class _FluidForcing:
    def __init__(self, f_c, f_m, g_n, g_tau):
        self.f_c = f_c
        self.f_m = f_m
        self.g_n = g_n
        self.g_tau = g_tau


class TrigMms:
    """Default manufactured case on the karstic rectangle.

    Requires constant mobility/viscosity laws (the forcing is derived with
    M = m0, nu = nu0).
    """

    def __init__(self, params, bbox, y_split, omega=2.0 * np.pi,
                 amp_phi=0.3, amp_u=1.0, amp_p=1.0, phase=0.3, phi_shift=0.0):
        if not (params.is_constant_mobility and params.is_constant_viscosity):
            raise ValueError("the trig MMS family needs constant M and nu laws")
        x, y, t = sm.symbols("x y t", real=True)
        x0, y0, x1, y1 = map(float, bbox)
        ys = float(y_split)
        self.y_split = ys

        s_t = sm.cos(omega * t + phase)
        xi = sm.pi * (x - x0) / (x1 - x0)
        eta = sm.pi * (y - y0) / (y1 - y0)

        phi = phi_shift + amp_phi * sm.cos(xi) * sm.cos(eta) * s_t
        lap_phi = sm.diff(phi, x, 2) + sm.diff(phi, y, 2)
        mu = params.gamma * ((phi ** 3 - phi) / params.epsilon
                             - params.epsilon * lap_phi)

        psi_c = amp_u * sm.sin(xi) ** 2 * ((y1 - y) / (y1 - ys)) ** 2 * s_t
        psi_m = amp_u * sm.sin(xi) ** 2 * ((y - y0) / (ys - y0)) ** 2 * s_t
        uc = (sm.diff(psi_c, y), -sm.diff(psi_c, x))
        um = (sm.diff(psi_m, y), -sm.diff(psi_m, x))

        pc = amp_p * sm.sin(xi) * sm.sin(eta) * s_t
        pm = amp_p * sm.cos(xi) * sm.cos(eta) * s_t  # x-average zero => mean zero

        nu = params.nu0
        mob = params.m0
        rho0, chi = params.rho0, params.chi
        pi_inv = np.linalg.inv(params.pi)

        # CH residual per subdomain (div u = 0): phi_t + u.grad phi - M lap mu
        lap_mu = sm.diff(mu, x, 2) + sm.diff(mu, y, 2)
        g1_c = sm.diff(phi, t) + uc[0] * sm.diff(phi, x) + uc[1] * sm.diff(phi, y) \
            - mob * lap_mu
        g1_m = sm.diff(phi, t) + um[0] * sm.diff(phi, x) + um[1] * sm.diff(phi, y) \
            - mob * lap_mu

        # conduit momentum: rho0 u_t - nu lap u + grad p + phi grad mu
        lap_uc = [sm.diff(c, x, 2) + sm.diff(c, y, 2) for c in uc]
        f_c = [rho0 * sm.diff(uc[a], t) - nu * lap_uc[a] + sm.diff(pc, (x, y)[a])
               + phi * sm.diff(mu, (x, y)[a]) for a in range(2)]

        # matrix momentum: (rho0/chi) u_t + nu Pi^-1 u + grad p + phi grad mu
        f_m = [rho0 / chi * sm.diff(um[a], t)
               + nu * (pi_inv[a, 0] * um[0] + pi_inv[a, 1] * um[1])
               + sm.diff(pm, (x, y)[a]) + phi * sm.diff(mu, (x, y)[a])
               for a in range(2)]

        # interface stress residuals at y = ys with n = (0, -1), tau = (1, 0):
        #   r_n   = 2 nu D22(u_c) - p_c + p_m
        #   r_tau = -2 nu D12(u_c) + alpha nu / sqrt(tr Pi) * u_c . tau
        D12 = sm.Rational(1, 2) * (sm.diff(uc[0], y) + sm.diff(uc[1], x))
        D22 = sm.diff(uc[1], y)
        bj = params.alpha_bjsj * nu / np.sqrt(np.trace(params.pi))
        r_n = (2 * nu * D22 - pc + pm).subs(y, ys)
        r_tau = (-2 * nu * D12 + bj * uc[0]).subs(y, ys)

        args = (x, y, t)
        fns = {
            "phi": phi, "phi_x": sm.diff(phi, x), "phi_y": sm.diff(phi, y),
            "mu": mu, "mu_x": sm.diff(mu, x), "mu_y": sm.diff(mu, y),
            "ucx": uc[0], "ucy": uc[1], "umx": um[0], "umy": um[1],
            "ucx_x": sm.diff(uc[0], x), "ucx_y": sm.diff(uc[0], y),
            "ucy_x": sm.diff(uc[1], x), "ucy_y": sm.diff(uc[1], y),
            "pc": pc, "pm": pm,
            "g1_c": g1_c, "g1_m": g1_m,
            "f_cx": f_c[0], "f_cy": f_c[1], "f_mx": f_m[0], "f_my": f_m[1],
            "r_n": r_n, "r_tau": r_tau,
        }
        self._f = {k: _lambdify(v, args) for k, v in fns.items()}
        self.exact = _Exact(self._f)

    # --- initial data -----------------------------------------------------
    def phi0(self, x, y):
        return self._f["phi"](x, y, np.zeros_like(x))

    def grad_phi0(self, x, y):
        z = np.zeros_like(x)
        return self._f["phi_x"](x, y, z), self._f["phi_y"](x, y, z)

    def u0_c(self, x, y):
        z = np.zeros_like(x)
        return np.stack([self._f["ucx"](x, y, z), self._f["ucy"](x, y, z)], axis=-1)

    def u0_m(self, x, y):
        z = np.zeros_like(x)
        return np.stack([self._f["umx"](x, y, z), self._f["umy"](x, y, z)], axis=-1)

    # --- forcings frozen at one time level ---------------------------------
    def ch_forcing_at(self, t):
        ys = self.y_split

        def g1(x, y):
            tt = np.full_like(x, t)
            return np.where(y > ys, self._f["g1_c"](x, y, tt),
                            self._f["g1_m"](x, y, tt))

        return (g1, None)  # g2 vanishes: mu is defined through the potential law

    def fluid_forcing_at(self, t):
        def vec(fx, fy):
            def f(x, y):
                tt = np.full_like(x, t)
                return np.stack([self._f[fx](x, y, tt), self._f[fy](x, y, tt)], axis=-1)
            return f

        def edge(name):
            def g(x, y):
                return self._f[name](x, y, np.full_like(x, t))
            return g

        return _FluidForcing(vec("f_cx", "f_cy"), vec("f_mx", "f_my"),
                             edge("r_n"), edge("r_tau"))
