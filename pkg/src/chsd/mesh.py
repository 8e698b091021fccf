"""Conforming triangulations of the two-subdomain karstic rectangle.

The domain is a rectangle split by a horizontal interface into a free-flow
conduit (upper strip) and a porous matrix (lower strip).  Meshes are
structured: nx-by-ny cells, each cut into two triangles with a fixed
diagonal orientation, so DOF numbering downstream is reproducible.
"""

import numpy as np

from .errors import DegenerateBox, MisalignedSplit

CONDUIT = "conduit"
MATRIX = "matrix"

GAMMA_C = "GammaC"
GAMMA_M = "GammaM"
GAMMA_CM = "GammaCM"


class KarstMesh:
    """Immutable triangulation with region, boundary and interface tags.

    Attributes
    ----------
        vertices : (nv, 2) float array
        triangles : (nt, 3) int array, counterclockwise
        region_of_triangle : (nt,) array of CONDUIT/MATRIX strings
        boundary_edges : list of (i, j, tag) with tag in {GammaC, GammaM, GammaCM}
        interface_edges : (ne, 2) int array, each edge left-to-right along tau1
        interface_normals : (ne, 2) float array, unit, conduit -> matrix
        interface_tangents : (ne, 2) float array, unit, orthogonal to the normal
        mesh_size_h : float, max triangle diameter (longest edge)
    """

    def __init__(self, vertices, triangles, region_of_triangle, boundary_edges,
                 interface_edges, interface_normals, interface_tangents, bbox):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=int)
        self.region_of_triangle = np.asarray(region_of_triangle)
        self.boundary_edges = list(boundary_edges)
        self.interface_edges = np.asarray(interface_edges, dtype=int).reshape(-1, 2)
        self.interface_normals = np.asarray(interface_normals, dtype=float).reshape(-1, 2)
        self.interface_tangents = np.asarray(interface_tangents, dtype=float).reshape(-1, 2)
        self.bbox = tuple(bbox)
        self.mesh_size_h = self._max_diameter()
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    def _max_diameter(self):
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.sqrt((e ** 2).sum(axis=2)).max())

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def triangle_ids(self, region=None):
        """Global triangle indices belonging to a region (all if None)."""
        if region is None or region == "whole":
            return np.arange(self.num_triangles)
        return np.nonzero(self.region_of_triangle == region)[0]

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges_with_tag(self, tag):
        return [(i, j) for (i, j, t) in self.boundary_edges if t == tag]


def build_karst_mesh(nx, ny, split_y=0.5, bbox=(0.0, 0.0, 1.0, 1.0)):
    """Build the structured karst mesh.

    Parameters
    ----------
        nx, ny : int
            cell counts; ny >= 2 so both regions are nonempty
        split_y : float
            interface height as a fraction of the box height; must land
            on a horizontal grid line (ny * split_y integral to 1e-12)
        bbox : (x0, y0, x1, y1)

    Returns
    -------
        KarstMesh with the conduit occupying the strip above the split.
    """
    x0, y0, x1, y1 = map(float, bbox)
    if not (x1 > x0 and y1 > y0):
        raise DegenerateBox(f"bbox {bbox} has nonpositive extent")
    if nx < 1 or ny < 2:
        raise DegenerateBox(f"need nx >= 1 and ny >= 2, got nx={nx}, ny={ny}")
    rows = ny * split_y
    j_split = round(rows)
    if abs(rows - j_split) > 1e-12:
        raise MisalignedSplit(
            f"split_y={split_y} puts the interface at row {rows}, not on a grid line")
    if j_split <= 0 or j_split >= ny:
        raise DegenerateBox(f"split_y={split_y} leaves an empty region")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    vid = lambda i, j: j * (nx + 1) + i
    vertices = np.array([(xs[i], ys[j]) for j in range(ny + 1) for i in range(nx + 1)])

    triangles = []
    regions = []
    for j in range(ny):
        region = MATRIX if j < j_split else CONDUIT
        for i in range(nx):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            triangles.append((a, b, c))
            triangles.append((a, c, d))
            regions.extend([region, region])

    boundary_edges = []
    for i in range(nx):  # bottom, top
        boundary_edges.append((vid(i, 0), vid(i + 1, 0), GAMMA_M))
        boundary_edges.append((vid(i, ny), vid(i + 1, ny), GAMMA_C))
    for j in range(ny):  # left, right; tag follows the adjacent region
        tag = GAMMA_M if j < j_split else GAMMA_C
        boundary_edges.append((vid(0, j), vid(0, j + 1), tag))
        boundary_edges.append((vid(nx, j), vid(nx, j + 1), tag))

    interface_edges = [(vid(i, j_split), vid(i + 1, j_split)) for i in range(nx)]
    boundary_edges.extend((a, b, GAMMA_CM) for a, b in interface_edges)
    n_cm = np.tile([0.0, -1.0], (nx, 1))  # conduit on top: into the matrix is down
    tau1 = np.tile([1.0, 0.0], (nx, 1))

    return KarstMesh(vertices, triangles, regions, boundary_edges,
                     interface_edges, n_cm, tau1, bbox)


def interface_frames(mesh):
    """Per-interface-edge orthonormal frame (n_cm, tau1).

    Recomputed from geometry: the normal is orthogonal to the edge and
    points from the conduit side into the matrix side.
    """
    frames_n = []
    frames_t = []
    for (a, b) in mesh.interface_edges:
        d = mesh.vertices[b] - mesh.vertices[a]
        t = d / np.linalg.norm(d)
        n = np.array([t[1], -t[0]])  # rotate -90deg: for a left-to-right edge this is (0,-1)
        frames_n.append(n)
        frames_t.append(t)
    return np.array(frames_n), np.array(frames_t)


def refine_uniform(mesh):
    """Split every triangle into four by edge midpoints; tags inherited."""
    vertices = list(map(tuple, mesh.vertices))
    midpoint = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            vertices.append(tuple(0.5 * (mesh.vertices[a] + mesh.vertices[b])))
            midpoint[key] = len(vertices) - 1
        return midpoint[key]

    triangles = []
    regions = []
    for t, (a, b, c) in enumerate(mesh.triangles):
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        triangles.extend([(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)])
        regions.extend([mesh.region_of_triangle[t]] * 4)

    boundary_edges = []
    for (a, b, tag) in mesh.boundary_edges:
        m = mid(a, b)
        boundary_edges.append((a, m, tag))
        boundary_edges.append((m, b, tag))

    interface_edges = []
    normals = []
    tangents = []
    for k, (a, b) in enumerate(mesh.interface_edges):
        m = mid(a, b)
        interface_edges.extend([(a, m), (m, b)])
        normals.extend([mesh.interface_normals[k]] * 2)
        tangents.extend([mesh.interface_tangents[k]] * 2)

    return KarstMesh(vertices, triangles, regions, boundary_edges,
                     interface_edges, normals, tangents, mesh.bbox)


def parse_dump(text):
    """Reader for dump_text output: (vertices, triangles, regions, tagged_edges)."""
    vertices, triangles, regions, edges = [], [], [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append((float(parts[1]), float(parts[2])))
        elif parts[0] == "t":
            triangles.append(tuple(int(k) for k in parts[1:4]))
            regions.append(parts[4])
        elif parts[0] == "e":
            edges.append((int(parts[1]), int(parts[2]), parts[3]))
    return np.array(vertices), np.array(triangles), np.array(regions), edges


def dump_text(mesh):
    """Plain-text mesh dump: `v x y`, `t i j k region`, `e i j tag` lines."""
    lines = []
    for x, y in mesh.vertices:
        lines.append(f"v {x:.17g} {y:.17g}")
    for (a, b, c), region in zip(mesh.triangles, mesh.region_of_triangle):
        lines.append(f"t {a} {b} {c} {region}")
    for (a, b, tag) in mesh.boundary_edges:
        lines.append(f"e {a} {b} {tag}")
    return "\n".join(lines) + "\n"
