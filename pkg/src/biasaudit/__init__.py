"""Quadratic-functional estimation, bias testing and universal inference on [0, 1]."""

from .basis import EstimatedBasis, FixedBasis, eval_fixed, gram_matrix, orthonormalize
from .bias_test import (
    BiasEstimate,
    BiasTestReport,
    estimate_bias_k_cv,
    estimate_bias_k_density,
    test_bias,
)
from .config import ConfigError, ExperimentConfig
from .dgp import Design, PropensityModel, SeriesDensity
from .harness import MetricsSummary, mc_se, run_experiment
from .pilots import Fold, PilotDensity, PilotRegression

__version__ = "0.1.0"

__all__ = [
    "BiasEstimate",
    "BiasTestReport",
    "ConfigError",
    "Design",
    "EstimatedBasis",
    "ExperimentConfig",
    "FixedBasis",
    "Fold",
    "MetricsSummary",
    "PilotDensity",
    "PilotRegression",
    "PropensityModel",
    "SeriesDensity",
    "estimate_bias_k_cv",
    "estimate_bias_k_density",
    "eval_fixed",
    "gram_matrix",
    "mc_se",
    "orthonormalize",
    "run_experiment",
    "test_bias",
]
