"""Quantile estimation of alpha-stable laws from stable moving-average data."""

from .delta import Jacobian, asymptotic_covariance, numeric_jacobian, param_covariance
from .mcculloch import (
    EstimationResult,
    LookupTables,
    build_lookup,
    default_tables,
    estimate_params,
    invert_v,
    v_stats,
)
from .quantile_cov import (
    DEFAULT_LEVELS,
    CovMatrix,
    QuantileSet,
    empirical_quantiles,
    g0,
    g1_analytic,
    g_h_empirical,
    sigma_quantiles,
)
from .sma import SmaModel, aggregate_params, simulate
from .stable import StableParams, stable_cdf, stable_pdf, stable_quantile, stable_sample, stable_sf

__version__ = "0.1.0"

__all__ = [
    "StableParams",
    "stable_pdf",
    "stable_cdf",
    "stable_sf",
    "stable_quantile",
    "stable_sample",
    "SmaModel",
    "aggregate_params",
    "simulate",
    "DEFAULT_LEVELS",
    "QuantileSet",
    "CovMatrix",
    "empirical_quantiles",
    "g0",
    "g1_analytic",
    "g_h_empirical",
    "sigma_quantiles",
    "LookupTables",
    "EstimationResult",
    "build_lookup",
    "default_tables",
    "estimate_params",
    "invert_v",
    "v_stats",
    "Jacobian",
    "numeric_jacobian",
    "param_covariance",
    "asymptotic_covariance",
]
