"""Inequality-insensitive middle classes from percentile income shares."""

from __future__ import annotations

__version__ = "0.1.0"

from .data_io import Panel, cache_load, cache_store, filter_outliers, load_covariates, load_shares
from .distribution import PercentileDistribution, QuantileInterval, class_decomposition, interval_share
from .frontier import beta_map, country_specific_classes, refine_continuous, solve_middle_class, zero_frontier
from .inequality import InequalityMeasure
from .pareto import MonteCarloConfig, ParetoSociety, SocietySample

__all__ = [
    "InequalityMeasure",
    "MonteCarloConfig",
    "Panel",
    "ParetoSociety",
    "PercentileDistribution",
    "QuantileInterval",
    "SocietySample",
    "beta_map",
    "cache_load",
    "cache_store",
    "class_decomposition",
    "country_specific_classes",
    "filter_outliers",
    "interval_share",
    "load_covariates",
    "load_shares",
    "refine_continuous",
    "solve_middle_class",
    "zero_frontier",
]
