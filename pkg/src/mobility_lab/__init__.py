"""Mobility Lab - assortative mating, inequality and educational mobility."""

from mobility_lab.dynamics import simulate_dynamics, steady_state_variance
from mobility_lab.estimators import igc, igr, mean_sd_cv, spousal_correlation
from mobility_lab.exceptions import (
    ConfigError,
    EstimationError,
    MobilityLabError,
    ValidationError,
)
from mobility_lab.model import (
    Design,
    Estimator,
    FeedbackKind,
    FeedbackSpec,
    GenerationMoments,
    ModelParams,
    ObservationRule,
    PopulationConfig,
    RegressionResult,
    RegressionSpec,
    Regressor,
    StatKind,
)
from mobility_lab.population import generate_population, observe
from mobility_lab.regional import compute_panel, regress

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Design",
    "EstimationError",
    "Estimator",
    "FeedbackKind",
    "FeedbackSpec",
    "GenerationMoments",
    "MobilityLabError",
    "ModelParams",
    "ObservationRule",
    "PopulationConfig",
    "RegressionResult",
    "RegressionSpec",
    "Regressor",
    "StatKind",
    "ValidationError",
    "compute_panel",
    "generate_population",
    "igc",
    "igr",
    "mean_sd_cv",
    "observe",
    "regress",
    "simulate_dynamics",
    "spousal_correlation",
    "steady_state_variance",
]
