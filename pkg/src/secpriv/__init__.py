"""Attack detection in interconnected linear systems that share noisy,
subspace-limited measurements, and how privacy on the shared data trades
off against detection performance.

Subsystem and generator indices are 0-based throughout the Python API.
"""

from .chi2 import (
    DetectionCurvePoint,
    chi2_quantile,
    chi2_tail,
    detection_probability,
    noncentral_chi2_cdf,
    noncentral_chi2_tail,
)
from .config import ConfigError, ScenarioConfig, builtin_config, format_config, load_config, parse_config
from .detector import (
    AggregatedBatch,
    BatchModel,
    DetectionSetup,
    GLRTDetector,
    TestResult,
    aggregate,
    batch_model,
    build_setup,
    detection_parameters,
    glrt,
    glrt_statistic,
    process,
    stack_attack,
    undetectable,
)
from .exceptions import (
    DegenerateSetupError,
    EmptyPencilError,
    InfeasibleDesignError,
    InvalidInputError,
    NoTestPossibleError,
    NotPositiveDefiniteError,
    NumericalError,
    SecPrivError,
    UnsupportedProblemError,
)
from .linalg import PencilSpectrum, generalized_eigh, matrix_exponential, null_space_basis, pinv
from .privacy import (
    OrderingResult,
    PrivacyAssessment,
    PrivacyMechanism,
    assess,
    check_sufficient_condition,
    is_more_private,
    ml_state_estimate,
)
from .system import AttackSignal, InterconnectedSystem, SubsystemModel, Trajectory, apply_privacy, simulate
from .tradeoff import (
    NoiseDesignProblem,
    NoiseDesignSolution,
    TradeoffReport,
    admissible_region,
    build_noise_design,
    compare_mechanism_sets,
    solve_noise_design,
    strict_tradeoff_check,
)

__version__ = "0.1.0"

__all__ = [
    "AggregatedBatch",
    "AttackSignal",
    "BatchModel",
    "ConfigError",
    "DegenerateSetupError",
    "DetectionCurvePoint",
    "DetectionSetup",
    "EmptyPencilError",
    "GLRTDetector",
    "InfeasibleDesignError",
    "InterconnectedSystem",
    "InvalidInputError",
    "NoTestPossibleError",
    "NoiseDesignProblem",
    "NoiseDesignSolution",
    "NotPositiveDefiniteError",
    "NumericalError",
    "OrderingResult",
    "PencilSpectrum",
    "PrivacyAssessment",
    "PrivacyMechanism",
    "ScenarioConfig",
    "SecPrivError",
    "SubsystemModel",
    "TestResult",
    "TradeoffReport",
    "Trajectory",
    "UnsupportedProblemError",
    "admissible_region",
    "aggregate",
    "apply_privacy",
    "assess",
    "batch_model",
    "build_noise_design",
    "build_setup",
    "builtin_config",
    "check_sufficient_condition",
    "chi2_quantile",
    "chi2_tail",
    "compare_mechanism_sets",
    "detection_parameters",
    "detection_probability",
    "format_config",
    "generalized_eigh",
    "glrt",
    "glrt_statistic",
    "is_more_private",
    "load_config",
    "matrix_exponential",
    "ml_state_estimate",
    "noncentral_chi2_cdf",
    "noncentral_chi2_tail",
    "null_space_basis",
    "parse_config",
    "pinv",
    "process",
    "simulate",
    "solve_noise_design",
    "stack_attack",
    "strict_tradeoff_check",
    "undetectable",
]
