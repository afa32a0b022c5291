"""Bounds and point estimates for counterfactual probabilities from uplift scores."""

from .core import (
    QUANTITIES,
    CounterfactualDistribution,
    DomainError,
    Interval,
    Quantity,
    ScorePair,
    ScoreSet,
    conditional_entropy,
    frechet_bounds,
    frechet_span,
    uplift_bounds,
    uplift_bounds_span,
)
from .estimation import (
    BiasReport,
    EstimationReport,
    PointEstimate,
    SplitSpec,
    estimation_report,
    phi_population,
    point_estimates,
    run_algorithm_one,
    theoretical_bias,
)

__version__ = "0.1.0"

__all__ = [
    "QUANTITIES",
    "BiasReport",
    "CounterfactualDistribution",
    "DomainError",
    "EstimationReport",
    "Interval",
    "PointEstimate",
    "Quantity",
    "ScorePair",
    "ScoreSet",
    "SplitSpec",
    "conditional_entropy",
    "estimation_report",
    "frechet_bounds",
    "frechet_span",
    "phi_population",
    "point_estimates",
    "run_algorithm_one",
    "theoretical_bias",
    "uplift_bounds",
    "uplift_bounds_span",
]
