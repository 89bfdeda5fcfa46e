"""CEM-GMsFEM with Crank-Nicolson time stepping for semiclassical Schrödinger problems."""
from .grid import PeriodicGrid, Patch, build_grid, extract_patch, refine, prolong_nodal
from .assembly import (
    AssembledOperator,
    WeightFunction,
    assemble_hamiltonian,
    assemble_laplacian,
    assemble_mass,
    assemble_potential_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    restrict,
)
from .auxspace import (
    AuxiliarySpace,
    LocalEigenSet,
    build_auxiliary_space,
    build_projection,
    compute_lambda,
    solve_local_eigenproblem,
)
from .cembasis import (
    MultiscaleSpace,
    build_multiscale_space,
    decay_study,
    default_oversampling,
    solve_cem_basis,
)
from .problems import InitialData, Potential, make_initial_data, make_potential
from .evolve import EvolutionConfig, WaveField, cn_step, elliptic_project, run_cn
from .analysis import (
    ErrorReport,
    NormOperators,
    convergence_order,
    energy_density,
    position_density,
    relative_errors,
)

__version__ = "0.1.0"
