import numpy as np
import pytest
import sympy as sm

from chsd import analysis, io_cli, mms, scheme


@pytest.fixture(scope="module")
def params():
    return scheme.PhysParams(rho0=1.0, chi=0.7, gamma=0.05, epsilon=0.5).validate()


@pytest.fixture(scope="module")
def case(params):
    return mms.TrigMms(params, (0, 0, 1, 1), 0.5)


def _grid(n=41):
    x = np.linspace(0, 1, n)
    return np.meshgrid(x, x)


def test_zero_amplitudes_give_zero_forcings(params):
    c = mms.TrigMms(params, (0, 0, 1, 1), 0.5, amp_phi=0.0, amp_u=0.0, amp_p=0.0)
    x, y = _grid(11)
    g1, g2 = c.ch_forcing_at(0.3)
    assert np.abs(g1(x, y)).max() < 1e-14
    assert g2 is None
    f = c.fluid_forcing_at(0.3)
    assert np.abs(f.f_c(x, y)).max() < 1e-14
    assert np.abs(f.f_m(x, y)).max() < 1e-14
    assert np.abs(f.g_n(x, np.full_like(x, 0.5))).max() < 1e-14
    assert np.abs(f.g_tau(x, np.full_like(x, 0.5))).max() < 1e-14


def test_shifted_equilibrium_gives_zero_forcings(params):
    c = mms.TrigMms(params, (0, 0, 1, 1), 0.5, amp_phi=0.0, amp_u=0.0,
                    amp_p=0.0, phi_shift=1.0)
    x, y = _grid(11)
    g1, _ = c.ch_forcing_at(0.0)
    assert np.abs(g1(x, y)).max() < 1e-14
    f = c.fluid_forcing_at(0.0)
    assert np.abs(f.f_c(x, y)).max() < 1e-14
    assert np.abs(f.f_m(x, y)).max() < 1e-14


def test_exact_velocity_boundary_conditions(case):
    t = 0.37
    s = np.linspace(0, 1, 33)
    # outer conduit boundary: no slip
    for pts in (np.stack([s, np.ones_like(s)], -1),            # top
                np.stack([np.zeros_like(s), 0.5 + 0.5 * s], -1),
                np.stack([np.ones_like(s), 0.5 + 0.5 * s], -1)):
        u = case.exact.u_c(pts[None], t)
        assert np.abs(u).max() < 1e-13
    # matrix boundary: no normal flow
    bottom = case.exact.u_m(np.stack([s, np.zeros_like(s)], -1)[None], t)
    assert np.abs(bottom[..., 1]).max() < 1e-13
    left = case.exact.u_m(np.stack([np.zeros_like(s), 0.5 * s], -1)[None], t)
    right = case.exact.u_m(np.stack([np.ones_like(s), 0.5 * s], -1)[None], t)
    assert np.abs(left[..., 0]).max() < 1e-13
    assert np.abs(right[..., 0]).max() < 1e-13


def test_interface_normal_velocity_continuous(case):
    t = 0.8
    s = np.linspace(0, 1, 33)
    pts = np.stack([s, np.full_like(s, 0.5)], -1)[None]
    uc = case.exact.u_c(pts, t)
    um = case.exact.u_m(pts, t)
    assert np.abs(uc[..., 1] - um[..., 1]).max() < 1e-13


def test_phase_fields_have_neumann_boundaries(case):
    t = 0.6
    s = np.linspace(0, 1, 29)
    eps = 1e-6
    for wall, comp in ((np.stack([np.zeros_like(s), s], -1), 0),
                       (np.stack([np.ones_like(s), s], -1), 0),
                       (np.stack([s, np.zeros_like(s)], -1), 1),
                       (np.stack([s, np.ones_like(s)], -1), 1)):
        g_phi = case.exact.grad_phi(wall[None], t)
        g_mu = case.exact.grad_mu(wall[None], t)
        assert np.abs(g_phi[..., comp]).max() < 1e-12
        assert np.abs(g_mu[..., comp]).max() < 1e-12


def test_darcy_pressure_mean_zero(case):
    """The exact Darcy pressure integrates to zero over the matrix (the
    x-profile cos(pi x) averages out), so it lives in the mean-zero space."""
    x, y = sm.symbols("x y", real=True)
    pm = sm.cos(sm.pi * x) * sm.cos(sm.pi * y)  # the family's spatial profile
    mean = sm.integrate(sm.integrate(pm, (x, 0, 1)), (y, 0, sm.Rational(1, 2)))
    assert mean == 0
    # and numerically at a sample time, on a fine symmetric grid
    xs = np.linspace(0, 1, 2001)
    ys = np.linspace(0, 0.5, 1001)
    X, Y = np.meshgrid(xs, ys)
    vals = case.exact.p_m(np.stack([X, Y], axis=-1), 0.45)
    assert abs(np.trapezoid(np.trapezoid(vals, xs, axis=1), ys)) < 1e-10


def test_chem_potential_forcing_vanishes(case, params):
    """mu is defined through the potential law, so the second CH forcing is
    identically absent."""
    g1, g2 = case.ch_forcing_at(0.9)
    assert g2 is None


def test_forcing_spot_value_against_independent_derivation(params):
    """g1 at (0.25, 0.75, t=0) for the default family, cross-derived with an
    independent sympy construction of the same documented closed forms."""
    case = mms.TrigMms(params, (0, 0, 1, 1), 0.5)
    x, y, t = sm.symbols("x y t", real=True)
    omega, shift = 2 * sm.pi, sm.Rational(3, 10)
    st = sm.cos(omega * t + shift)
    phi = sm.Rational(3, 10) * sm.cos(sm.pi * x) * sm.cos(sm.pi * y) * st
    mu = params.gamma * ((phi ** 3 - phi) / params.epsilon
                         - params.epsilon * (sm.diff(phi, x, 2) + sm.diff(phi, y, 2)))
    psi_c = sm.sin(sm.pi * x) ** 2 * ((1 - y) / sm.Rational(1, 2)) ** 2 * st
    ucx, ucy = sm.diff(psi_c, y), -sm.diff(psi_c, x)
    g1 = (sm.diff(phi, t) + ucx * sm.diff(phi, x) + ucy * sm.diff(phi, y)
          - params.m0 * (sm.diff(mu, x, 2) + sm.diff(mu, y, 2)))
    expect = float(g1.subs({x: sm.Rational(1, 4), y: sm.Rational(3, 4), t: 0}))
    # frozen from this derivation (gamma=0.05, epsilon=0.5, M=1, amp_phi=0.3):
    assert abs(expect - (-0.9093629490109709)) < 1e-12
    g1_pkg, _ = case.ch_forcing_at(0.0)
    got = g1_pkg(np.array([[0.25]]), np.array([[0.75]]))[0, 0]
    assert abs(got - expect) < 1e-12


def test_variable_laws_rejected(params):
    p = scheme.PhysParams(mobility_law="quadratic", m0=0.5, m1=1.0).validate()
    with pytest.raises(ValueError):
        mms.TrigMms(p, (0, 0, 1, 1), 0.5)


def test_stretched_box_convergence_trend(params):
    """The family generalizes beyond the unit square: halving h on a
    2-by-1 box still roughly halves the phase-gradient error."""
    base = io_cli.parse_config(
        "nx = 16\nny = 8\nbbox = 0 0 2 1\nsplit_y = 0.5\nmms = on\n"
        "tau = 0.0125\nnum_steps = 8\ngamma = 0.05\nepsilon = 0.5\n")
    errs = []
    for lvl in range(2):
        cfg = base.replace(nx=16 * 2 ** lvl, ny=8 * 2 ** lvl,
                           tau=0.0125 / 2 ** lvl, num_steps=8 * 2 ** lvl)
        traj = scheme.run(cfg)
        assert traj.failure is None
        errs.append(traj.mms_errors["err_grad_phi"])
    assert 1.6 < errs[0] / errs[1] < 2.6


def test_coarse_convergence_trend(params):
    """Halving h (with tau ~ h) must roughly halve the phase-gradient error;
    a sign error anywhere in the forcing derivation breaks this badly."""
    base = io_cli.parse_config(
        "nx = 8\nny = 8\nmms = on\ntau = 0.0125\nnum_steps = 8\n"
        "gamma = 0.05\nepsilon = 0.5\n")
    errs = []
    for lvl in range(2):
        n = 8 * 2 ** lvl
        tau = 0.1 / n
        cfg = base.replace(nx=n, ny=n, tau=tau, num_steps=int(round(0.1 / tau)))
        traj = scheme.run(cfg)
        assert traj.failure is None
        errs.append(traj.mms_errors["err_grad_phi"])
    ratio = errs[0] / errs[1]
    assert 1.6 < ratio < 2.6
