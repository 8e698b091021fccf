import numpy as np
import pytest

import oracles
from chsd import analysis, fem, mesh, scheme
from chsd.errors import NotMeanZero, ZeroField
from helpers import admissible_velocities


@pytest.fixture(scope="module")
def ops4(disc_4x4):
    return analysis.DiscreteOperators(disc_4x4)


def _random_state(disc, seed=0, phi_scale=0.4):
    rng = np.random.default_rng(seed)
    phi = fem.Field(disc.y, phi_scale * rng.uniform(-1, 1, disc.y.dof_count))
    mu = fem.Field(disc.y, rng.uniform(-1, 1, disc.y.dof_count))
    uc, um = admissible_velocities(disc, rng)
    return scheme.FieldSet(phi, mu, uc, fem.Field(disc.qc), um, fem.Field(disc.qm))


# --- energy -------------------------------------------------------------------

def test_energy_pure_phase_vanishes(disc_4x4, params):
    state = scheme.FieldSet(fem.Field(disc_4x4.y, np.ones(disc_4x4.y.dof_count)),
                            fem.Field(disc_4x4.y), fem.Field(disc_4x4.vc),
                            fem.Field(disc_4x4.qc), fem.Field(disc_4x4.vm),
                            fem.Field(disc_4x4.qm))
    rep = analysis.energy(state, params, disc_4x4)
    assert abs(rep.total) < 1e-14
    assert abs(rep.dissipation) < 1e-14


def test_energy_mixed_state_value(disc_4x4, params):
    state = scheme.FieldSet(fem.Field(disc_4x4.y), fem.Field(disc_4x4.y),
                            fem.Field(disc_4x4.vc), fem.Field(disc_4x4.qc),
                            fem.Field(disc_4x4.vm), fem.Field(disc_4x4.qm))
    rep = analysis.energy(state, params, disc_4x4)
    assert abs(rep.total - params.gamma / (4 * params.epsilon)) < 1e-13


def test_energy_matches_symbolic_oracle(disc_2x2, params):
    state = _random_state(disc_2x2, seed=3)
    rep = analysis.energy(state, params, disc_2x2)
    expect = oracles.energy_oracle(state, params, disc_2x2)
    assert abs(rep.total - expect) <= 1e-10 * max(abs(expect), 1.0)


def test_energy_parts_sum_and_sign(disc_4x4, params):
    rep = analysis.energy(_random_state(disc_4x4, seed=9), params, disc_4x4)
    parts = rep.kinetic_conduit + rep.kinetic_matrix + rep.interfacial
    assert abs(rep.total - parts) < 1e-13 * abs(rep.total)
    assert min(rep.kinetic_conduit, rep.kinetic_matrix, rep.interfacial) >= 0.0
    assert rep.dissipation >= 0.0


# --- discrete operators ----------------------------------------------------------

def test_laplacian_of_constant_is_zero(disc_4x4, ops4):
    v = fem.Field(disc_4x4.y, np.full(disc_4x4.y.dof_count, 3.7))
    assert np.abs(ops4.discrete_laplacian(v).coeffs).max() < 1e-12


def test_laplacian_mean_zero(disc_4x4, ops4):
    rng = np.random.default_rng(2)
    for _ in range(5):
        v = fem.Field(disc_4x4.y, rng.normal(size=disc_4x4.y.dof_count))
        assert abs(ops4.mean(ops4.discrete_laplacian(v))) < 1e-12


def test_laplacian_matches_dense_oracle(disc_2x2):
    ops = analysis.DiscreteOperators(disc_2x2)
    m = disc_2x2.mesh
    M = oracles.dense_mass(m, disc_2x2.y, m.triangle_ids())
    K = oracles.dense_stiffness(m, disc_2x2.y, m.triangle_ids())
    rng = np.random.default_rng(4)
    v = fem.Field(disc_2x2.y, rng.normal(size=disc_2x2.y.dof_count))
    expect = oracles.gauss_solve(M, -K @ v.coeffs)
    got = ops.discrete_laplacian(v).coeffs
    assert np.abs(got - expect).max() < 1e-11


def test_laplacian_linearity(disc_4x4, ops4):
    rng = np.random.default_rng(6)
    v = fem.Field(disc_4x4.y, rng.normal(size=disc_4x4.y.dof_count))
    w = fem.Field(disc_4x4.y, rng.normal(size=disc_4x4.y.dof_count))
    a, b = rng.normal(size=2)
    combo = fem.Field(disc_4x4.y, a * v.coeffs + b * w.coeffs)
    lhs = ops4.discrete_laplacian(combo).coeffs
    rhs = a * ops4.discrete_laplacian(v).coeffs + b * ops4.discrete_laplacian(w).coeffs
    assert np.abs(lhs - rhs).max() < 1e-12


def _mean_zero_field(disc, ops, rng):
    z = rng.normal(size=disc.y.dof_count)
    f = fem.Field(disc.y, z)
    f.coeffs -= ops.mean(f) / ops.mean(fem.Field(disc.y, np.ones_like(z)))
    return f


def test_neg_norm_of_zero(disc_4x4, ops4):
    assert ops4.neg_one_h_norm(fem.Field(disc_4x4.y)) == 0.0


def test_neg_norm_definition_identity(disc_4x4, ops4):
    rng = np.random.default_rng(7)
    for _ in range(5):
        z = _mean_zero_field(disc_4x4, ops4, rng)
        n1 = ops4.neg_one_h_norm(z)
        inner = z.coeffs @ (ops4.M @ ops4.t_h(z).coeffs)
        assert abs(n1 ** 2 - inner) <= 1e-12 * max(n1 ** 2, 1e-30)


def test_neg_norm_requires_mean_zero(disc_4x4, ops4):
    with pytest.raises(NotMeanZero):
        ops4.neg_one_h_norm(fem.Field(disc_4x4.y, np.ones(disc_4x4.y.dof_count)))


def test_t_h_matches_dense_constrained_oracle(disc_2x2):
    ops = analysis.DiscreteOperators(disc_2x2)
    m = disc_2x2.mesh
    M = oracles.dense_mass(m, disc_2x2.y, m.triangle_ids())
    K = oracles.dense_stiffness(m, disc_2x2.y, m.triangle_ids())
    mv = M.sum(axis=1)
    rng = np.random.default_rng(8)
    z = _mean_zero_field(disc_2x2, ops, rng)
    n = disc_2x2.y.dof_count
    Aug = np.zeros((n + 1, n + 1))
    Aug[:n, :n] = K
    Aug[:n, n] = mv
    Aug[n, :n] = mv
    expect = oracles.gauss_solve(Aug, np.concatenate([M @ z.coeffs, [0.0]]))[:n]
    assert np.abs(ops.t_h(z).coeffs - expect).max() < 1e-11


def test_neg_norm_uniformly_bounded_by_l2_under_refinement(params):
    """|| z ||_{-1,h} <= C || z || with C uniform in h: the per-level ratios of
    an interpolated smooth family stay within a fixed margin of the
    coarsest-mesh value (they converge upward to the continuum constant,
    since refinement nests the spaces; a nonincreasing C is unattainable)."""
    f = lambda x, y: np.cos(np.pi * x) * np.cos(2 * np.pi * y)
    ratios = []
    m = mesh.build_karst_mesh(4, 4)
    for _ in range(4):
        disc = fem.Discretization(m)
        ops = analysis.DiscreteOperators(disc)
        z = fem.Field(disc.y, disc.y.interpolate(f))
        z.coeffs -= ops.mean(z)  # the family is mean-zero up to quadrature
        l2 = np.sqrt(z.coeffs @ (ops.M @ z.coeffs))
        ratios.append(ops.neg_one_h_norm(z) / l2)
        m = mesh.refine_uniform(m)
    assert max(ratios) <= 1.25 * ratios[0]
    steps = np.abs(np.diff(ratios))
    assert (np.diff(steps) < 0).all()  # increments shrink: convergent, not drifting


# --- Ritz projection ---------------------------------------------------------------

def test_ritz_idempotent_on_fe_fields(disc_4x4, ops4):
    rng = np.random.default_rng(11)
    v = fem.Field(disc_4x4.y, rng.normal(size=disc_4x4.y.dof_count))
    pv = ops4.ritz_project_field(v)
    assert np.abs(pv.coeffs - v.coeffs).max() < 1e-11


def test_ritz_exact_on_affine(disc_4x4, ops4):
    p = ops4.ritz_project(lambda x, y: 2.0 * x - y + 0.25,
                          lambda x, y: (np.full_like(x, 2.0), np.full_like(x, -1.0)))
    nodes = disc_4x4.y.node_coords
    exact = 2.0 * nodes[:, 0] - nodes[:, 1] + 0.25
    assert np.abs(p.coeffs - exact).max() < 1e-12


def test_ritz_mean_match(disc_4x4, ops4):
    f = lambda x, y: np.sin(x) * np.cos(y)
    p = ops4.ritz_project(f, lambda x, y: (np.cos(x) * np.cos(y),
                                           -np.sin(x) * np.sin(y)))
    batch = disc_4x4.batch_whole
    exact_mean = fem.integrate(batch, f(batch.points[..., 0], batch.points[..., 1]))
    assert abs(ops4.mean(p) - exact_mean) < 1e-12


def test_ritz_h1_rate_one():
    f = lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y)
    gf = lambda x, y: (-np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
                       -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y))
    errs, hs = [], []
    m = mesh.build_karst_mesh(4, 4)
    for _ in range(4):
        disc = fem.Discretization(m)
        ops = analysis.DiscreteOperators(disc)
        p = ops.ritz_project(f, gf)
        batch = disc.batch_whole
        x, y = batch.points[..., 0], batch.points[..., 1]
        g = np.stack(gf(x, y), axis=-1)
        err = np.sqrt(fem.integrate(batch, ((p.grad_at(batch) - g) ** 2).sum(-1)))
        errs.append(err)
        hs.append(m.mesh_size_h)
        m = mesh.refine_uniform(m)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 0.85 <= slope <= 1.15


# --- Gagliardo-Nirenberg probe -------------------------------------------------------

def test_gn_probe_constant_is_one(disc_4x4, ops4):
    v = fem.Field(disc_4x4.y, np.ones(disc_4x4.y.dof_count))
    assert abs(analysis.gn_probe(v, ops4) - 1.0) < 1e-12


def test_gn_probe_positive(disc_4x4, ops4):
    rng = np.random.default_rng(12)
    for _ in range(5):
        v = fem.Field(disc_4x4.y, rng.normal(size=disc_4x4.y.dof_count))
        assert analysis.gn_probe(v, ops4) > 0.0


def test_gn_probe_zero_field_rejected(disc_4x4, ops4):
    with pytest.raises(ZeroField):
        analysis.gn_probe(fem.Field(disc_4x4.y), ops4)


def test_gn_probe_bounded_on_smooth_ladder():
    f = lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y)
    ratios = []
    m = mesh.build_karst_mesh(4, 4)
    for _ in range(4):
        disc = fem.Discretization(m)
        ops = analysis.DiscreteOperators(disc)
        ratios.append(analysis.gn_probe(fem.Field(disc.y, disc.y.interpolate(f)), ops))
        m = mesh.refine_uniform(m)
    assert max(ratios) / min(ratios) < 10.0


# --- exact data fed as numerical data ---------------------------------------------------

class _ExactField:
    def __init__(self, vals, grads):
        self._v, self._g = vals, grads

    def at(self, batch):
        return self._v(batch.points)

    def grad_at(self, batch):
        return self._g(batch.points)


def test_probe_zero_for_exact_data(disc_4x4, params):
    """Feeding the exact solution as numerical data gives a zero-error column,
    which the slope fit then refuses to fit (flags NaN)."""
    from chsd import mms
    case = mms.TrigMms(params, (0, 0, 1, 1), 0.5)
    probe = analysis.ErrorProbe(disc_4x4, case.exact)

    class FakeState:
        t = 0.3
        phi = _ExactField(lambda p: case.exact.phi(p, 0.3),
                          lambda p: case.exact.grad_phi(p, 0.3))
        mu = _ExactField(lambda p: case.exact.mu(p, 0.3),
                         lambda p: case.exact.grad_mu(p, 0.3))
        uc = _ExactField(lambda p: case.exact.u_c(p, 0.3),
                         lambda p: case.exact.grad_u_c(p, 0.3))
        um = _ExactField(lambda p: case.exact.u_m(p, 0.3), None)

    probe.observe(1, FakeState(), tau=0.1)
    errs = probe.results()
    assert all(v <= 1e-10 for v in errs.values())
    slopes = analysis.fit_slopes([0.1, 0.05, 0.025], [errs, errs, errs])
    assert all(np.isnan(s) for s in slopes.values())


def test_stability_diagnostics_values(disc_4x4, params):
    rng = np.random.default_rng(13)
    ops = analysis.DiscreteOperators(disc_4x4)
    state = scheme.FieldSet(
        fem.Field(disc_4x4.y, rng.normal(size=disc_4x4.y.dof_count)),
        fem.Field(disc_4x4.y, rng.normal(size=disc_4x4.y.dof_count)),
        fem.Field(disc_4x4.vc), fem.Field(disc_4x4.qc),
        fem.Field(disc_4x4.vm), fem.Field(disc_4x4.qm))
    d = analysis.stability_diagnostics(state, ops)
    lap = ops.discrete_laplacian(state.phi)
    assert abs(d["lap_phi_l2"] ** 2 - lap.coeffs @ (ops.M @ lap.coeffs)) < 1e-12
    mu = state.mu.coeffs
    assert abs(d["mu_h1"] ** 2 - (mu @ (ops.M @ mu) + mu @ (ops.K @ mu))) < 1e-10
    assert d["grad_lap_phi_l2"] > 0


# --- slope fitting --------------------------------------------------------------------

def test_fit_slopes_synthetic():
    hs = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    rows = [{c: h for c in analysis.ERROR_COLUMNS} for h in hs]
    slopes = analysis.fit_slopes(hs, rows)
    assert all(abs(s - 1.0) < 1e-9 for s in slopes.values())
    rows2 = [{c: h ** 2 for c in analysis.ERROR_COLUMNS} for h in hs]
    assert all(abs(s - 2.0) < 1e-9 for s in analysis.fit_slopes(hs, rows2).values())


def test_fit_slopes_flags_zero_error():
    hs = [0.1, 0.05, 0.025]
    rows = [{c: 0.0 for c in analysis.ERROR_COLUMNS} for _ in hs]
    slopes = analysis.fit_slopes(hs, rows)
    assert all(np.isnan(s) for s in slopes.values())
