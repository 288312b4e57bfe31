"""Fit simplified models to instantaneous fuel-rate oracles."""

from .pipeline import (
    CachedOracle,
    FitReport,
    PointwiseOracle,
    StepReport,
    detect_duty,
    fit,
    fit_feasible_region,
    fit_simplified,
)
from .solvers import bisect_many, bisect_root, kkt_gradient, nnls

__all__ = [
    "CachedOracle",
    "FitReport",
    "PointwiseOracle",
    "StepReport",
    "bisect_many",
    "bisect_root",
    "detect_duty",
    "fit",
    "fit_feasible_region",
    "fit_simplified",
    "kkt_gradient",
    "nnls",
]
