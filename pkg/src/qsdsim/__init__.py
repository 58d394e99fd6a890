"""Stochastic quantum-trajectory estimation of Heisenberg-picture matrix
elements and two-time correlations, with a deterministic master-equation
oracle for verification."""

from .correlations import (
    INITIAL_SPECS,
    CorrelationRequest,
    correlate,
    heisenberg_element,
    prepare_initial,
)
from .diffusion import (
    SCHEMES,
    QsdEngine,
    SdeConfig,
    Trajectory,
    complex_standard_error,
    estimate_matrix_element,
    propagate,
    step_normalized,
    step_quasilinear,
)
from .ensemble import (
    BenchmarkPoint,
    EnsembleError,
    EnsembleResult,
    benchmark_sweep,
    relative_rms_error,
    run_ensemble,
)
from .errors import InstabilityError
from .gisin import (
    DEFAULT_FLOOR,
    VARIANTS,
    CoupledPair,
    GisinResult,
    instability_report,
    run_coupled_ensemble,
    step_coupled,
    step_coupled_quasilinear,
)
from .hilbert import (
    DoubledState,
    Ket,
    LindbladModel,
    Operator,
    basis_ket,
    decay_model,
    drive_hamiltonian,
    driven_decay_model,
    extend_model,
    make_doubled_state,
    projector,
    sigma_minus,
    sigma_plus,
    two_level_operators,
)
from .jumps import (
    MAX_JUMP_PROBABILITY,
    JumpConfig,
    JumpControl,
    JumpEngine,
    jump_correlate,
    jump_matrix_element,
    step_jump,
)
from .master import (
    DegenerateSteadyStateError,
    DensityMatrix,
    Liouvillian,
    build_liouvillian,
    doubled_block_evolution,
    doubled_matrix_element,
    evolve,
    regression_matrix_element,
    steady_state,
    two_time_correlation,
)
from .noise import NoiseStream, substream, wiener_increments

__version__ = "0.1.0"

__all__ = [
    "BenchmarkPoint",
    "CorrelationRequest",
    "CoupledPair",
    "DEFAULT_FLOOR",
    "DegenerateSteadyStateError",
    "DensityMatrix",
    "DoubledState",
    "EnsembleError",
    "EnsembleResult",
    "GisinResult",
    "INITIAL_SPECS",
    "InstabilityError",
    "JumpConfig",
    "JumpControl",
    "JumpEngine",
    "Ket",
    "LindbladModel",
    "Liouvillian",
    "MAX_JUMP_PROBABILITY",
    "NoiseStream",
    "Operator",
    "QsdEngine",
    "SCHEMES",
    "SdeConfig",
    "Trajectory",
    "VARIANTS",
    "basis_ket",
    "benchmark_sweep",
    "build_liouvillian",
    "complex_standard_error",
    "correlate",
    "decay_model",
    "doubled_block_evolution",
    "doubled_matrix_element",
    "drive_hamiltonian",
    "driven_decay_model",
    "estimate_matrix_element",
    "evolve",
    "extend_model",
    "heisenberg_element",
    "instability_report",
    "jump_correlate",
    "jump_matrix_element",
    "make_doubled_state",
    "prepare_initial",
    "projector",
    "propagate",
    "regression_matrix_element",
    "relative_rms_error",
    "run_coupled_ensemble",
    "run_ensemble",
    "sigma_minus",
    "sigma_plus",
    "steady_state",
    "step_coupled",
    "step_coupled_quasilinear",
    "step_jump",
    "step_normalized",
    "step_quasilinear",
    "substream",
    "two_level_operators",
    "two_time_correlation",
    "wiener_increments",
    "__version__",
]
