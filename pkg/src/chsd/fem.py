"""Finite-element core: spaces, quadrature, sparse assembly, direct solver.

Scalar and vector Lagrange elements (P1, P2) over a region of a KarstMesh.
Assembly is vectorized over element batches (einsum over quadrature points)
and accumulated into scipy CSR matrices; element order is fixed by the mesh,
so assembled matrices are bitwise deterministic.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (ArityMismatch, DimensionMismatch, MeshMismatch,
                     SingularMatrix, UnsupportedDegree)

# Dunavant rules on the reference triangle (0,0)-(1,0)-(0,1); weights sum to 1/2,
# all positive (positivity is load-bearing for the discrete energy inequality).
_TRI_RULES = {}


def _orbit1(a):
    return [(a, a), (1.0 - 2.0 * a, a), (a, 1.0 - 2.0 * a)]


def _orbit2(a, b):
    c = 1.0 - a - b
    return [(a, b), (b, a), (a, c), (c, a), (b, c), (c, b)]


def _build_tri_rules():
    pts2 = _orbit1(1.0 / 6.0)
    w2 = [1.0 / 6.0] * 3
    _TRI_RULES[2] = (np.array(pts2), np.array(w2))

    a1, w1 = 0.445948490915965, 0.223381589678011 / 2.0
    a2, w2_ = 0.091576213509771, 0.109951743655322 / 2.0
    pts4 = _orbit1(a1) + _orbit1(a2)
    w4 = [w1] * 3 + [w2_] * 3
    _TRI_RULES[4] = (np.array(pts4), np.array(w4))

    b1, v1 = 0.063089014491502, 0.050844906370207 / 2.0
    b2, v2 = 0.249286745170910, 0.116786275726379 / 2.0
    b3, c3 = 0.310352451033785, 0.053145049844816
    v3 = 0.082851075618374 / 2.0
    pts6 = _orbit1(b1) + _orbit1(b2) + _orbit2(b3, c3)
    w6 = [v1] * 3 + [v2] * 3 + [v3] * 6
    _TRI_RULES[6] = (np.array(pts6), np.array(w6))


_build_tri_rules()

DEFAULT_DEGREE = 6


class QuadratureRule:
    """Reference-triangle rule: points (nq, 2) and weights summing to 1/2."""

    def __init__(self, degree):
        if degree not in _TRI_RULES:
            raise UnsupportedDegree(f"no triangle rule of degree {degree}")
        self.degree = degree
        self.points, self.weights = _TRI_RULES[degree]


def quadrature(degree):
    """Rule exact for all bivariate polynomials up to `degree` (2, 4 or 6)."""
    return QuadratureRule(degree)


# 3-point Gauss on [0, 1], exact to degree 5, for interface edge integrals
_G = np.sqrt(3.0 / 5.0) / 2.0
EDGE_POINTS = np.array([0.5 - _G, 0.5, 0.5 + _G])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def _p1_basis(pts):
    x, y = pts[:, 0], pts[:, 1]
    N = np.stack([1.0 - x - y, x, y], axis=1)
    dN = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]),
                         (len(pts), 3, 2)).copy()
    return N, dN


def _p2_basis(pts):
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    N = np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                  4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=1)
    d0 = np.array([-1.0, -1.0])
    d1 = np.array([1.0, 0.0])
    d2 = np.array([0.0, 1.0])
    dN = np.empty((len(pts), 6, 2))
    dN[:, 0] = (4 * l0 - 1)[:, None] * d0
    dN[:, 1] = (4 * l1 - 1)[:, None] * d1
    dN[:, 2] = (4 * l2 - 1)[:, None] * d2
    dN[:, 3] = 4 * (l0[:, None] * d1 + l1[:, None] * d0)
    dN[:, 4] = 4 * (l1[:, None] * d2 + l2[:, None] * d1)
    dN[:, 5] = 4 * (l2[:, None] * d0 + l0[:, None] * d2)
    return N, dN


_BASIS = {"p1": _p1_basis, "p2": _p2_basis}
_NLOC = {"p1": 3, "p2": 6}


class ElementBatch:
    """Geometry of a set of triangles evaluated at a quadrature rule."""

    def __init__(self, mesh, tri_ids, rule):
        self.mesh = mesh
        self.tri_ids = np.asarray(tri_ids, dtype=int)
        self.rule = rule
        tri = mesh.triangles[self.tri_ids]
        p0 = mesh.vertices[tri[:, 0]]
        p1 = mesh.vertices[tri[:, 1]]
        p2 = mesh.vertices[tri[:, 2]]
        J = np.stack([p1 - p0, p2 - p0], axis=2)  # (ne, 2, 2), columns are edge vectors
        self.det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1]
        inv[:, 0, 1] = -J[:, 0, 1]
        inv[:, 1, 0] = -J[:, 1, 0]
        inv[:, 1, 1] = J[:, 0, 0]
        inv /= self.det[:, None, None]
        self.invJT = np.transpose(inv, (0, 2, 1))
        ref = rule.points
        self.points = p0[:, None, :] + np.einsum("eds,qs->eqd", J, ref)
        self.weights = rule.weights
        self._grad_cache = {}

    def scaled_weights(self):
        """w_q * |detJ_e| as an (ne, nq) array."""
        return np.abs(self.det)[:, None] * self.weights[None, :]

    def grads(self, family):
        """Physical basis gradients (ne, nq, nloc, 2) for a family."""
        if family not in self._grad_cache:
            _, dN = _BASIS[family](self.rule.points)
            self._grad_cache[family] = np.einsum("eds,qns->eqnd", self.invJT, dN)
        return self._grad_cache[family]

    def values(self, family):
        return _BASIS[family](self.rule.points)[0]


class FeSpace:
    """Lagrange space over one mesh region with deterministic DOF numbering.

    Scalar nodes are the region's vertices (ascending global id), followed
    for P2 by the region's edges (ascending (min, max) vertex pair).  Vector
    spaces interleave components: dof = 2*node + component.
    """

    def __init__(self, mesh, region="whole", family="p1", arity=1):
        if family not in _BASIS:
            raise ArityMismatch(f"unknown family {family!r}")
        if arity not in (1, 2):
            raise ArityMismatch(f"arity must be 1 or 2, got {arity}")
        self.mesh = mesh
        self.region = region
        self.family = family
        self.arity = arity
        self.elems = mesh.triangle_ids(region)
        self.row_of_tri = np.full(mesh.num_triangles, -1, dtype=int)
        self.row_of_tri[self.elems] = np.arange(len(self.elems))

        tri = mesh.triangles[self.elems]
        verts = np.unique(tri)
        self.node_of_vertex = {int(v): k for k, v in enumerate(verts)}
        coords = [mesh.vertices[v] for v in verts]
        nloc = _NLOC[family]
        self.cell_nodes = np.empty((len(self.elems), nloc), dtype=int)
        for k in range(3):
            self.cell_nodes[:, k] = [self.node_of_vertex[int(v)] for v in tri[:, k]]

        self.node_of_edge = {}
        if family == "p2":
            edges = sorted({(min(int(a), int(b)), max(int(a), int(b)))
                            for t in tri for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))})
            base = len(verts)
            for k, e in enumerate(edges):
                self.node_of_edge[e] = base + k
                coords.append(0.5 * (mesh.vertices[e[0]] + mesh.vertices[e[1]]))
            local_edges = ((0, 1), (1, 2), (2, 0))
            for k, (la, lb) in enumerate(local_edges):
                keys = [(min(int(t[la]), int(t[lb])), max(int(t[la]), int(t[lb]))) for t in tri]
                self.cell_nodes[:, 3 + k] = [self.node_of_edge[e] for e in keys]

        self.node_coords = np.array(coords)
        self.num_nodes = len(coords)
        self.dof_count = self.num_nodes * arity
        self._dof_coords = np.repeat(self.node_coords, arity, axis=0)
        self._cell_dofs = self._expand(self.cell_nodes)

    @property
    def dof_coordinates(self):
        return self._dof_coords

    def _expand(self, nodes):
        if self.arity == 1:
            return nodes
        out = np.empty(nodes.shape[:-1] + (2 * nodes.shape[-1],), dtype=int)
        out[..., 0::2] = 2 * nodes
        out[..., 1::2] = 2 * nodes + 1
        return out

    def cell_dofs(self, rows=None):
        return self._cell_dofs if rows is None else self._cell_dofs[rows]

    def batch_rows(self, batch):
        """Rows of this space's element list matching a batch's triangles."""
        rows = self.row_of_tri[batch.tri_ids]
        if (rows < 0).any():
            raise MeshMismatch("batch contains triangles outside the space's region")
        return rows

    def interpolate(self, f):
        """Nodal interpolation of a callable f(x, y); vector callables may
        return components stacked on either the first or the last axis."""
        x, y = self.node_coords[:, 0], self.node_coords[:, 1]
        vals = np.asarray(f(x, y), dtype=float)
        if self.arity == 1:
            return vals.copy()
        if vals.shape == (self.num_nodes, 2):
            vals = vals.T
        coeffs = np.empty(self.dof_count)
        coeffs[0::2] = vals[0]
        coeffs[1::2] = vals[1]
        return coeffs

    def nodes_on(self, tag):
        """Scalar node ids whose location lies on edges carrying `tag`."""
        nodes = set()
        for (a, b, t) in self.mesh.boundary_edges:
            if t != tag:
                continue
            if int(a) in self.node_of_vertex and int(b) in self.node_of_vertex:
                nodes.add(self.node_of_vertex[int(a)])
                nodes.add(self.node_of_vertex[int(b)])
                key = (min(int(a), int(b)), max(int(a), int(b)))
                if key in self.node_of_edge:
                    nodes.add(self.node_of_edge[key])
        return np.array(sorted(nodes), dtype=int)

    def dofs_on(self, tag, component=None):
        nodes = self.nodes_on(tag)
        if self.arity == 1:
            return nodes
        if component is None:
            return np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
        return 2 * nodes + component

    def normal_component_dofs(self, tag):
        """Dofs of the velocity component normal to axis-aligned tagged edges."""
        if self.arity != 2:
            raise ArityMismatch("normal components need a vector space")
        dofs = set()
        for (a, b, t) in self.mesh.boundary_edges:
            if t != tag:
                continue
            pa, pb = self.mesh.vertices[a], self.mesh.vertices[b]
            comp = 1 if abs(pa[1] - pb[1]) < 1e-14 else 0  # horizontal edge -> y comp
            for v in (int(a), int(b)):
                if v in self.node_of_vertex:
                    dofs.add(2 * self.node_of_vertex[v] + comp)
            key = (min(int(a), int(b)), max(int(a), int(b)))
            if key in self.node_of_edge:
                dofs.add(2 * self.node_of_edge[key] + comp)
        return np.array(sorted(dofs), dtype=int)

    def batch(self, degree=DEFAULT_DEGREE, region=None):
        tri_ids = self.elems if region is None else self.mesh.triangle_ids(region)
        if region is not None and (self.row_of_tri[tri_ids] < 0).any():
            raise MeshMismatch(f"region {region!r} not covered by this space")
        return ElementBatch(self.mesh, tri_ids, quadrature(degree))


class Field:
    """Coefficient vector bound to its space, evaluable on element batches."""

    def __init__(self, space, coeffs=None):
        self.space = space
        self.coeffs = np.zeros(space.dof_count) if coeffs is None else np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (space.dof_count,):
            raise DimensionMismatch(f"expected {space.dof_count} coefficients")

    def copy(self):
        return Field(self.space, self.coeffs.copy())

    def at(self, batch):
        """Values at batch quadrature points: (ne, nq) or (ne, nq, 2)."""
        rows = self.space.batch_rows(batch)
        N = batch.values(self.space.family)
        nodes = self.space.cell_nodes[rows]
        if self.space.arity == 1:
            return np.einsum("en,qn->eq", self.coeffs[nodes], N)
        cx = self.coeffs[2 * nodes]
        cy = self.coeffs[2 * nodes + 1]
        vals = np.empty(nodes.shape[:1] + N.shape[:1] + (2,))
        vals[..., 0] = np.einsum("en,qn->eq", cx, N)
        vals[..., 1] = np.einsum("en,qn->eq", cy, N)
        return vals

    def grad_at(self, batch):
        """Gradients: (ne, nq, 2) scalar, or (ne, nq, 2, 2) with [a, d] = d u_a / d x_d."""
        rows = self.space.batch_rows(batch)
        G = batch.grads(self.space.family)
        nodes = self.space.cell_nodes[rows]
        if self.space.arity == 1:
            return np.einsum("en,eqnd->eqd", self.coeffs[nodes], G)
        out = np.empty(G.shape[:2] + (2, 2))
        out[..., 0, :] = np.einsum("en,eqnd->eqd", self.coeffs[2 * nodes], G)
        out[..., 1, :] = np.einsum("en,eqnd->eqd", self.coeffs[2 * nodes + 1], G)
        return out

    def node_values(self):
        if self.space.arity == 1:
            return self.coeffs
        return np.stack([self.coeffs[0::2], self.coeffs[1::2]], axis=1)


def integrate(batch, values):
    """Sum of w_q |detJ| * values over a batch; values is (ne, nq)."""
    return float(np.einsum("eq,eq->", batch.scaled_weights(), values))


def _is_number(v):
    return isinstance(v, (int, float, np.integer, np.floating))


def _coeff_at(coeff, batch):
    if coeff is None:
        return np.ones((len(batch.tri_ids), len(batch.weights)))
    if _is_number(coeff):
        return np.full((len(batch.tri_ids), len(batch.weights)), float(coeff))
    if isinstance(coeff, Field):
        return coeff.at(batch)
    if isinstance(coeff, np.ndarray):
        return coeff
    return np.asarray(coeff(batch.points[..., 0], batch.points[..., 1]), dtype=float)


def _vector_values(f, batch):
    if isinstance(f, Field):
        return f.at(batch)
    if isinstance(f, np.ndarray):
        return f
    return np.asarray(f(batch.points[..., 0], batch.points[..., 1]), dtype=float)


def _check_pair(space_test, space_trial):
    if space_test.mesh is not space_trial.mesh:
        raise MeshMismatch("test and trial spaces use different meshes")


def _scatter(data, rows, cols, shape):
    return sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def _vector_expand(local, tensor):
    """Scalar local (ne, ni, nj) -> vector local (ne, 2ni, 2nj) with a 2x2 tensor weight."""
    return np.einsum("eij,ab->eiajb", local, tensor).reshape(
        local.shape[0], 2 * local.shape[1], 2 * local.shape[2])


def assemble_bilinear(space_test, space_trial, kernel, coeff=None, tensor=None,
                      region=None, degree=DEFAULT_DEGREE, batch=None):
    """Assemble a bilinear form into a CSR matrix.

    Kernels
    -------
        mass                 (c u, v); vector spaces accept a 2x2 `tensor` weight
        stiffness            (c grad u, grad v), scalar spaces
        weighted_stiffness   stiffness with a mandatory coefficient
        symmetric_gradient   2 (c D(u), D(v)), vector spaces
        divergence           (q div v): rows = vector test space, cols = scalar trial
        pressure_gradient    (v, grad q): rows = vector test space, cols = scalar trial

    `coeff` may be None, a number, a Field, or a callable f(x, y).
    """
    _check_pair(space_test, space_trial)
    if batch is None:
        if region is not None:
            batch = space_test.batch(degree, region=region)
        elif space_test.region == space_trial.region:
            batch = space_test.batch(degree)
        else:
            raise MeshMismatch("spaces on different regions need an explicit region")
    rows_t = space_test.batch_rows(batch)
    rows_u = space_trial.batch_rows(batch)
    w = batch.scaled_weights()
    c = _coeff_at(coeff, batch)
    shape = (space_test.dof_count, space_trial.dof_count)

    if kernel == "mass":
        if space_test.arity != space_trial.arity:
            raise ArityMismatch("mass needs equal arities")
        Nt = batch.values(space_test.family)
        Nu = batch.values(space_trial.family)
        local = np.einsum("eq,eq,qi,qj->eij", w, c, Nt, Nu)
        if space_test.arity == 2:
            T = np.eye(2) if tensor is None else np.asarray(tensor, dtype=float)
            local = _vector_expand(local, T)
        rows = space_test.cell_dofs(rows_t)
        cols = space_trial.cell_dofs(rows_u)
    elif kernel in ("stiffness", "weighted_stiffness"):
        if space_test.arity != 1 or space_trial.arity != 1:
            raise ArityMismatch(f"{kernel} is a scalar kernel")
        if kernel == "weighted_stiffness" and coeff is None:
            raise ArityMismatch("weighted_stiffness needs a coefficient")
        Gt = batch.grads(space_test.family)
        Gu = batch.grads(space_trial.family)
        local = np.einsum("eq,eq,eqid,eqjd->eij", w, c, Gt, Gu)
        rows = space_test.cell_dofs(rows_t)
        cols = space_trial.cell_dofs(rows_u)
    elif kernel == "symmetric_gradient":
        if space_test.arity != 2 or space_trial.arity != 2:
            raise ArityMismatch("symmetric_gradient needs vector spaces")
        Gt = batch.grads(space_test.family)
        Gu = batch.grads(space_trial.family)
        # 2 (c D(u), D(v)) with test dof (i,a), trial (j,b):
        #   c [delta_ab grad Ni . grad Nj + dNi/dx_b dNj/dx_a]
        dot = np.einsum("eq,eq,eqid,eqjd->eij", w, c, Gt, Gu)
        cross = np.einsum("eq,eq,eqib,eqja->eijab", w, c, Gt, Gu)
        ne, ni, nj = dot.shape
        local = cross + np.einsum("eij,ab->eijab", dot, np.eye(2))
        local = np.transpose(local, (0, 1, 3, 2, 4)).reshape(ne, 2 * ni, 2 * nj)
        rows = space_test.cell_dofs(rows_t)
        cols = space_trial.cell_dofs(rows_u)
    elif kernel == "divergence":
        if space_test.arity != 2 or space_trial.arity != 1:
            raise ArityMismatch("divergence: vector test, scalar trial")
        Gt = batch.grads(space_test.family)
        Nu = batch.values(space_trial.family)
        local = np.einsum("eq,eq,eqia,qj->eiaj", w, c, Gt, Nu)
        ne, ni, _, nj = local.shape
        local = local.reshape(ne, 2 * ni, nj)
        rows = space_test.cell_dofs(rows_t)
        cols = space_trial.cell_dofs(rows_u)
    elif kernel == "pressure_gradient":
        if space_test.arity != 2 or space_trial.arity != 1:
            raise ArityMismatch("pressure_gradient: vector test, scalar trial")
        Nt = batch.values(space_test.family)
        Gu = batch.grads(space_trial.family)
        local = np.einsum("eq,eq,qi,eqja->eiaj", w, c, Nt, Gu)
        ne, ni, _, nj = local.shape
        local = local.reshape(ne, 2 * ni, nj)
        rows = space_test.cell_dofs(rows_t)
        cols = space_trial.cell_dofs(rows_u)
    else:
        raise ArityMismatch(f"unknown kernel {kernel!r}")

    nl_r, nl_c = local.shape[1], local.shape[2]
    R = np.repeat(rows[:, :, None], nl_c, axis=2)
    C = np.repeat(cols[:, None, :], nl_r, axis=1)
    return _scatter(local, R, C, shape)


def assemble_linear(space, kernel, f, region=None, degree=DEFAULT_DEGREE, batch=None):
    """Assemble a load vector.

    Kernels: `source` ((f, v); vector f for vector spaces) and
    `grad_source` ((f_vec, grad v) on scalar spaces).
    """
    if batch is None:
        batch = space.batch(degree, region=region)
    rows = space.batch_rows(batch)
    w = batch.scaled_weights()
    out = np.zeros(space.dof_count)

    if kernel == "source":
        N = batch.values(space.family)
        if space.arity == 1:
            c = _coeff_at(f, batch)
            local = np.einsum("eq,eq,qi->ei", w, c, N)
            dofs = space.cell_dofs(rows)
        else:
            vals = _vector_values(f, batch)
            if vals.shape[-1] != 2:
                raise ArityMismatch("vector source must supply 2 components")
            local = np.einsum("eq,eqa,qi->eia", w, vals, N)
            local = local.reshape(local.shape[0], -1)
            dofs = space.cell_dofs(rows)
    elif kernel == "grad_source":
        if space.arity != 1:
            raise ArityMismatch("grad_source is a scalar kernel")
        G = batch.grads(space.family)
        vals = _vector_values(f, batch)
        local = np.einsum("eq,eqd,eqid->ei", w, vals, G)
        dofs = space.cell_dofs(rows)
    else:
        raise ArityMismatch(f"unknown linear kernel {kernel!r}")

    np.add.at(out, dofs.ravel(), local.ravel())
    return out


class EdgeBatch:
    """Interface edges with frames and 3-point Gauss data."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.edges = mesh.interface_edges
        self.normals = mesh.interface_normals
        self.tangents = mesh.interface_tangents
        pa = mesh.vertices[self.edges[:, 0]]
        pb = mesh.vertices[self.edges[:, 1]]
        self.lengths = np.linalg.norm(pb - pa, axis=1)
        s = EDGE_POINTS
        self.points = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
        self.s = s
        self.weights = EDGE_WEIGHTS

    def scaled_weights(self):
        return self.lengths[:, None] * self.weights[None, :]


def _edge_trace(space, edge_batch):
    """Scalar nodes and 1D shape values of a space restricted to interface edges.

    Returns (nodes (ne, nloc_e), N (nq, nloc_e)).
    """
    s = edge_batch.s
    edges = edge_batch.edges
    if space.family == "p1":
        nodes = np.array([[space.node_of_vertex[int(a)], space.node_of_vertex[int(b)]]
                          for a, b in edges])
        N = np.stack([1.0 - s, s], axis=1)
    else:
        nodes = np.array([[space.node_of_vertex[int(a)], space.node_of_vertex[int(b)],
                           space.node_of_edge[(min(int(a), int(b)), max(int(a), int(b)))]]
                          for a, b in edges])
        N = np.stack([(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)],
                     axis=1)
    return nodes, N


def _edge_coeff(coeff, edge_batch):
    if coeff is None:
        return np.ones((len(edge_batch.edges), len(edge_batch.s)))
    if _is_number(coeff):
        return np.full((len(edge_batch.edges), len(edge_batch.s)), float(coeff))
    if isinstance(coeff, np.ndarray):
        return coeff
    if isinstance(coeff, Field):
        nodes, N = _edge_trace(coeff.space, edge_batch)
        return np.einsum("en,qn->eq", coeff.coeffs[nodes], N)
    return np.asarray(coeff(edge_batch.points[..., 0], edge_batch.points[..., 1]), dtype=float)


def assemble_interface(space_test, space_trial, kernel, coeff=None):
    """Interface-edge bilinear forms on Gamma_cm.

    Kernels
    -------
        interface_tangential       c (u . tau)(v . tau); both spaces vector
        interface_normal_pressure  (v . n) q: vector test rows, scalar trial cols
    """
    _check_pair(space_test, space_trial)
    eb = EdgeBatch(space_test.mesh)
    w = eb.scaled_weights()
    c = _edge_coeff(coeff, eb)
    nodes_t, Nt = _edge_trace(space_test, eb)
    nodes_u, Nu = _edge_trace(space_trial, eb)
    shape = (space_test.dof_count, space_trial.dof_count)

    if kernel == "interface_tangential":
        if space_test.arity != 2 or space_trial.arity != 2:
            raise ArityMismatch("interface_tangential needs vector spaces")
        base = np.einsum("eq,eq,qi,qj->eij", w, c, Nt, Nu)
        tt = np.einsum("ea,eb->eab", eb.tangents, eb.tangents)
        local = np.einsum("eij,eab->eiajb", base, tt).reshape(base.shape[0], -1, 2 * Nu.shape[1])
        rows = space_test._expand(nodes_t)
        cols = space_trial._expand(nodes_u)
    elif kernel == "interface_normal_pressure":
        if space_test.arity != 2 or space_trial.arity != 1:
            raise ArityMismatch("interface_normal_pressure: vector test, scalar trial")
        base = np.einsum("eq,eq,qi,qj->eij", w, c, Nt, Nu)
        local = np.einsum("eij,ea->eiaj", base, eb.normals).reshape(base.shape[0], -1, Nu.shape[1])
        rows = space_test._expand(nodes_t)
        cols = nodes_u
    else:
        raise ArityMismatch(f"unknown interface kernel {kernel!r}")

    nl_r, nl_c = local.shape[1], local.shape[2]
    R = np.repeat(rows[:, :, None], nl_c, axis=2)
    C = np.repeat(cols[:, None, :], nl_r, axis=1)
    return _scatter(local, R, C, shape)


def assemble_interface_linear(space, kernel, g):
    """Interface loads: `normal_source` g (v.n) and `tangent_source` g (v.tau)."""
    if space.arity != 2:
        raise ArityMismatch("interface loads act on vector spaces")
    eb = EdgeBatch(space.mesh)
    w = eb.scaled_weights()
    gv = _edge_coeff(g, eb)
    nodes, N = _edge_trace(space, eb)
    direction = eb.normals if kernel == "normal_source" else eb.tangents
    if kernel not in ("normal_source", "tangent_source"):
        raise ArityMismatch(f"unknown interface load kernel {kernel!r}")
    local = np.einsum("eq,eq,qi,ea->eia", w, gv, N, direction).reshape(len(eb.edges), -1)
    out = np.zeros(space.dof_count)
    np.add.at(out, space._expand(nodes).ravel(), local.ravel())
    return out


class LuSolver:
    """Cached sparse LU (SuperLU with COLAMD ordering) with residual checks."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"matrix is {A.shape}, not square")
        self.A = A
        scale = abs(A).max() if A.nnz else 0.0
        try:
            self.lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc
        umin = np.abs(self.lu.U.diagonal()).min() if A.shape[0] else 0.0
        if scale == 0.0 or umin <= 1e-14 * scale:
            raise SingularMatrix(f"pivot {umin:.3e} below threshold for scale {scale:.3e}")
        self.last_residual = 0.0

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape != (self.A.shape[0],):
            raise DimensionMismatch(f"rhs has shape {b.shape}, matrix {self.A.shape}")
        x = self.lu.solve(b)
        nb = np.linalg.norm(b)
        self.last_residual = float(np.linalg.norm(self.A @ x - b) / max(nb, 1.0))
        if self.last_residual > 1e-10:
            raise SingularMatrix(
                f"direct solve residual {self.last_residual:.3e} exceeds 1e-10")
        return x


def solve_sparse(A, b):
    """Direct solve with relative residual <= 1e-10 guaranteed (or SingularMatrix)."""
    return LuSolver(A).solve(np.asarray(b, dtype=float))


def interface_values(field, edge_batch):
    """Field values at interface-edge quadrature points: (ne, nq[, 2])."""
    nodes, N = _edge_trace(field.space, edge_batch)
    if field.space.arity == 1:
        return np.einsum("en,qn->eq", field.coeffs[nodes], N)
    out = np.empty((nodes.shape[0], N.shape[0], 2))
    out[..., 0] = np.einsum("en,qn->eq", field.coeffs[2 * nodes], N)
    out[..., 1] = np.einsum("en,qn->eq", field.coeffs[2 * nodes + 1], N)
    return out


class Discretization:
    """Space bundle for the scheme: phase space Y on the whole domain and a
    Taylor-Hood pair per subdomain, plus shared degree-6 element batches."""

    def __init__(self, mesh, phase_degree=1):
        if phase_degree not in (1, 2):
            raise ArityMismatch("phase space must be P1 or P2")
        self.mesh = mesh
        self.phase_degree = phase_degree
        fam = "p1" if phase_degree == 1 else "p2"
        self.y = FeSpace(mesh, "whole", fam, 1)
        self.vc = FeSpace(mesh, "conduit", "p2", 2)
        self.qc = FeSpace(mesh, "conduit", "p1", 1)
        self.vm = FeSpace(mesh, "matrix", "p2", 2)
        self.qm = FeSpace(mesh, "matrix", "p1", 1)
        rule = quadrature(DEFAULT_DEGREE)
        self.batch_whole = ElementBatch(mesh, mesh.triangle_ids(), rule)
        self.batch_conduit = ElementBatch(mesh, mesh.triangle_ids("conduit"), rule)
        self.batch_matrix = ElementBatch(mesh, mesh.triangle_ids("matrix"), rule)
        self.edge_batch = EdgeBatch(mesh)
        self._cache = {}

    def y_mass(self):
        if "y_mass" not in self._cache:
            self._cache["y_mass"] = assemble_bilinear(self.y, self.y, "mass",
                                                      batch=self.batch_whole)
        return self._cache["y_mass"]

    def y_stiffness(self):
        if "y_stiff" not in self._cache:
            self._cache["y_stiff"] = assemble_bilinear(self.y, self.y, "stiffness",
                                                       batch=self.batch_whole)
        return self._cache["y_stiff"]

    def y_mean_vector(self):
        """Entries (v_i, 1), i.e. the mass-matrix row sums."""
        if "y_mean" not in self._cache:
            self._cache["y_mean"] = np.asarray(self.y_mass().sum(axis=1)).ravel()
        return self._cache["y_mean"]


def coo_text(A):
    """Debug dump `row col value` per line, row-major order."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    return "\n".join(f"{C.row[k]} {C.col[k]} {C.data[k]:.17g}" for k in order) + "\n"
