"""Spectral limits of the horizon-truncated fractional p-Laplacian on intervals."""

__version__ = "0.1.0"

from .kernelmath import (
    INFINITE,
    KernelParams,
    embedding_constant,
    gamma_constant,
    k_constant,
    local_p_laplacian_lambda1,
    scaling_factor,
)
from .mesh import DiscreteFunction, DomainSpec, Mesh, build_mesh, interpolate
from .energy import (
    EnergyBreakdown,
    fractional_energy,
    local_gradient_energy,
    lp_mass,
    nonlocal_energy,
    nonlocal_energy_gradient,
    scaled_energy,
)
from .eigensolver import (
    EigenPair,
    SolverOptions,
    assemble_p2_matrices,
    shooting_oracle_lambda1,
    solve_first_eigenpair,
    solve_p2_spectrum,
)
