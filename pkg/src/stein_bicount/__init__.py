"""Stein identities and Stein-type goodness-of-fit and symmetry tests for bivariate counts."""

__version__ = "0.1.0"

from .bootstrap import BootstrapConfig, WarpSpeedRun, bootstrap_p_value, chi2_test, quantile, warp_speed_study
from .distributions import (
    BHermParams,
    BivariateSample,
    BnbParams,
    BPoiParams,
    BvbParams,
    TruncatedPmfGrid,
    draw,
    factorial_moment,
    factorial_moments,
    parse_spec,
    pmf,
    pmf_grid,
    sample,
)
from .errors import (
    DegenerateSample,
    InvalidParams,
    NumericalHealthWarning,
    ParseError,
    SteinBicountError,
    TruncationError,
    UnsupportedParams,
)
from .inference import SummaryStats, TestReport, fit_bpoi_null, summarize, t1, t2, t3, t_star, t_star_p_value
from .stein import WeightFunction, eval_identity_empirical, eval_identity_exact, get_weight
from .study import Scenario, StudyTable, registry, render, run_table

__all__ = [
    "BHermParams",
    "BPoiParams",
    "BivariateSample",
    "BnbParams",
    "BootstrapConfig",
    "BvbParams",
    "DegenerateSample",
    "InvalidParams",
    "NumericalHealthWarning",
    "ParseError",
    "Scenario",
    "SteinBicountError",
    "StudyTable",
    "SummaryStats",
    "TestReport",
    "TruncatedPmfGrid",
    "TruncationError",
    "UnsupportedParams",
    "WarpSpeedRun",
    "WeightFunction",
    "bootstrap_p_value",
    "chi2_test",
    "draw",
    "eval_identity_empirical",
    "eval_identity_exact",
    "factorial_moment",
    "factorial_moments",
    "fit_bpoi_null",
    "get_weight",
    "parse_spec",
    "pmf",
    "pmf_grid",
    "quantile",
    "registry",
    "render",
    "run_table",
    "sample",
    "summarize",
    "t1",
    "t2",
    "t3",
    "t_star",
    "t_star_p_value",
    "warp_speed_study",
]
