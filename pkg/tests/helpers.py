import numpy as np

from chsd import fem, mesh


def admissible_velocities(disc, rng, scale=1.0):
    """Random velocity pair satisfying the strong boundary conditions."""
    uc = fem.Field(disc.vc, scale * rng.uniform(-1, 1, disc.vc.dof_count))
    uc.coeffs[disc.vc.dofs_on(mesh.GAMMA_C)] = 0.0
    um = fem.Field(disc.vm, scale * rng.uniform(-1, 1, disc.vm.dof_count))
    um.coeffs[disc.vm.normal_component_dofs(mesh.GAMMA_M)] = 0.0
    return uc, um
