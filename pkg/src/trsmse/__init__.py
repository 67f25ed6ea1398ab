"""Population size estimation from triple record systems."""

__version__ = "0.1.0"

from .coverage import estimate_sc
from .estimators import (
    ConstantEstimator,
    LogLinearEstimator,
    MtbEstimator,
    SampleCoverageEstimator,
    ThbmEstimator,
    make_estimator,
)
from .loglinear import estimate_loglinear, irls_fit
from .mtb import estimate_mtb
from .table import EstimateResult, TrsTable, builtin_dataset, load_table, validate_table
from .thbm import fit_thbm
from .uncertainty import aacir, benchmark, bootstrap, chao_ci

__all__ = [
    "__version__",
    "ConstantEstimator", "LogLinearEstimator", "MtbEstimator", "SampleCoverageEstimator",
    "ThbmEstimator", "make_estimator",
    "EstimateResult", "TrsTable", "builtin_dataset", "load_table", "validate_table",
    "estimate_loglinear", "irls_fit", "estimate_sc", "estimate_mtb", "fit_thbm",
    "aacir", "benchmark", "bootstrap", "chao_ci",
]
