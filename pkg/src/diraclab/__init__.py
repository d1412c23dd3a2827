"""diraclab: spectral and radial solvers for a cubic Dirac equation.

Subpackages split along the natural seams: clifford (matrices, grids,
multipliers), propagator (linear flows and the split-step solver),
partialwave (angular sectors and the radial solver), potential (matrix
potentials and admissibility), norms (mixed space-time norms and the
estimate-verification harness), cli (command-line entry points).
"""

from .clifford import (
    ALPHA,
    BETA,
    DiracMatrices,
    GridSpec,
    SpinorField3D,
    apply_dirac,
    apply_multiplier,
    h1_norm,
    l2_norm,
    linf_norm,
    sobolev_norm,
    verify_algebra,
)
from .norms import (
    ESTIMATES,
    InadmissiblePotential,
    MixedNormSpec,
    NormReport,
    UnknownEstimate,
    angular_lp_slope,
    angular_sobolev,
    maximal_ensemble,
    mixed_norm,
    verify_estimate,
)
from .partialwave import (
    QuantumNumbers,
    RadialSpinorState,
    cross_validate,
    evolve_radial,
    lift,
    project,
)
from .potential import PotentialSpec, calibrate_amplitude, check_admissibility
from .propagator import (
    CubicNonlinearity,
    EvolutionConfig,
    SolverBlowup,
    Trajectory,
    evolve,
    free_propagate,
)

__version__ = "0.1.0"

__all__ = [
    "ALPHA",
    "BETA",
    "CubicNonlinearity",
    "DiracMatrices",
    "ESTIMATES",
    "EvolutionConfig",
    "GridSpec",
    "InadmissiblePotential",
    "MixedNormSpec",
    "NormReport",
    "PotentialSpec",
    "QuantumNumbers",
    "RadialSpinorState",
    "SolverBlowup",
    "SpinorField3D",
    "Trajectory",
    "UnknownEstimate",
    "angular_lp_slope",
    "angular_sobolev",
    "apply_dirac",
    "apply_multiplier",
    "calibrate_amplitude",
    "check_admissibility",
    "cross_validate",
    "evolve",
    "evolve_radial",
    "free_propagate",
    "h1_norm",
    "l2_norm",
    "lift",
    "linf_norm",
    "maximal_ensemble",
    "mixed_norm",
    "project",
    "sobolev_norm",
    "verify_algebra",
    "verify_estimate",
    "__version__",
]
