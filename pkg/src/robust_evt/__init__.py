"""Extreme quantile estimation that is robust to GEV model error."""

from .divergence import DivergenceSpec, knn_divergence, lambert_w, phi_alpha, phi_alpha_inv
from .fit import FitResult, block_maxima, fit_gev_mle
from .gev import GevParams, gev_cdf, gev_quantile, gev_tail
from .pipeline import PipelineConfig, ReturnLevelCurve, emit_curve, ingest_csv, run_naive, run_robust
from .worstcase import robust_expectation, solve_theta, solve_tilt, worst_case_quantile, worst_case_tail

__version__ = "0.1.0"

__all__ = [
    "DivergenceSpec",
    "FitResult",
    "GevParams",
    "PipelineConfig",
    "ReturnLevelCurve",
    "block_maxima",
    "emit_curve",
    "fit_gev_mle",
    "gev_cdf",
    "gev_quantile",
    "gev_tail",
    "ingest_csv",
    "knn_divergence",
    "lambert_w",
    "phi_alpha",
    "phi_alpha_inv",
    "robust_expectation",
    "run_naive",
    "run_robust",
    "solve_theta",
    "solve_tilt",
    "worst_case_quantile",
    "worst_case_tail",
]
