"""Minimum-error discrimination of quantum states known only from calibration data."""

from .calibsim import (
    ASYMPTOTIC,
    CalibrationConfig,
    EmpiricalErrorReport,
    empirical_error_rate,
    exact_error_rate_of_design,
    sample_frequencies,
)
from .helstrom import (
    DiscriminationReport,
    brute_force_oracle,
    check_extremal,
    error_rate,
    helstrom_bound_pure,
    helstrom_two_state,
)
from .mlse import (
    DegenerateLikelihoodError,
    MlseIterationState,
    MlseOptions,
    MlseProblem,
    MlseResult,
    fixed_point_residual,
    initial_state,
    iterate_once,
    log_likelihood,
    run_mlse,
    run_mlse_batch,
)
from .states import PovmSet, StateParams, born_table, make_prior_povm, make_state, pauli_projector, state_pair

__version__ = "0.1.0"
