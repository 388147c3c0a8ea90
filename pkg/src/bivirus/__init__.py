"""Competing SIS epidemics on two-layer networks.

Tools to analyze which of two cross-immunizing viruses survives on a given
pair of network layers, to simulate the coupled dynamics, and to design a
second layer so that either virus can win depending on the initial state.
"""

__version__ = "0.1.0"

from .analysis import (
    EquilibriumReport,
    StabilityCheck,
    check_survival_stability,
    find_coexistence,
    full_report,
)
from .construction import (
    ConstructionConfig,
    ConstructionRecord,
    construct_b,
    default_z,
    make_b_prime,
    predict_y_bar,
)
from .dynamics import (
    BivirusSystem,
    IntegrationControls,
    StateVector,
    Trajectory,
    classify_limit,
    integrate,
    jacobian,
    rhs,
)
from .errors import (
    BivirusError,
    ConstructionError,
    ConvergenceError,
    EigenConvergenceError,
    InvalidMatrixError,
    ReducibleMatrixError,
    StateSpaceError,
    StepSizeError,
    SubthresholdError,
)
from .experiments import (
    SweepResult,
    SweepSpec,
    basin_sweep,
    random_initial_conditions,
    run_case_study,
)
from .linalg import (
    ContactMatrix,
    PerronData,
    is_irreducible,
    is_nonsingular_m_matrix,
    perron_vectors,
    spectral_abscissa,
    spectral_radius,
)
from .netio import RawNetwork, load_matrix, save_matrix, threshold_and_normalize
from .sis import EndemicEquilibrium, endemic_equilibrium, equilibrium_residual

__all__ = [
    "BivirusError",
    "BivirusSystem",
    "ConstructionConfig",
    "ConstructionError",
    "ConstructionRecord",
    "ContactMatrix",
    "ConvergenceError",
    "EigenConvergenceError",
    "EndemicEquilibrium",
    "EquilibriumReport",
    "IntegrationControls",
    "InvalidMatrixError",
    "PerronData",
    "RawNetwork",
    "ReducibleMatrixError",
    "StabilityCheck",
    "StateSpaceError",
    "StateVector",
    "StepSizeError",
    "SubthresholdError",
    "SweepResult",
    "SweepSpec",
    "Trajectory",
    "basin_sweep",
    "check_survival_stability",
    "classify_limit",
    "construct_b",
    "default_z",
    "endemic_equilibrium",
    "equilibrium_residual",
    "find_coexistence",
    "full_report",
    "integrate",
    "is_irreducible",
    "is_nonsingular_m_matrix",
    "jacobian",
    "load_matrix",
    "make_b_prime",
    "perron_vectors",
    "predict_y_bar",
    "random_initial_conditions",
    "rhs",
    "run_case_study",
    "save_matrix",
    "spectral_abscissa",
    "spectral_radius",
    "threshold_and_normalize",
]
