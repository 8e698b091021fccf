import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
sys.path.insert(0, os.path.dirname(__file__))

from chsd import fem, mesh, scheme  # noqa: E402


@pytest.fixture(scope="session")
def unit_tri_mesh():
    """Single reference triangle wrapped as a mesh (conduit region)."""
    return mesh.KarstMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], ["conduit"],
                          [], np.empty((0, 2)), np.empty((0, 2)),
                          np.empty((0, 2)), (0, 0, 1, 1))


@pytest.fixture(scope="session")
def mesh_1x2():
    return mesh.build_karst_mesh(1, 2, 0.5)


@pytest.fixture(scope="session")
def mesh_2x2():
    """4 triangles per region: the oracle-equivalence mesh."""
    return mesh.build_karst_mesh(2, 2, 0.5)


@pytest.fixture(scope="session")
def mesh_4x4():
    return mesh.build_karst_mesh(4, 4, 0.5)


@pytest.fixture(scope="session")
def disc_2x2(mesh_2x2):
    return fem.Discretization(mesh_2x2)


@pytest.fixture(scope="session")
def disc_4x4(mesh_4x4):
    return fem.Discretization(mesh_4x4)


@pytest.fixture(scope="session")
def params():
    return scheme.PhysParams(rho0=1.0, chi=0.7, gamma=0.05, epsilon=0.5,
                             alpha_bjsj=1.0).validate()
