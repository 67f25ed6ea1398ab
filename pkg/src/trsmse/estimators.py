"""Estimator objects with a scikit-learn style interface.

``fit(X)`` accepts anything :func:`trsmse.table.validate_table` understands
(a :class:`TrsTable`, seven counts, or a cell mapping) and stores
``result_`` and ``n_hat_``. ``estimate(table, rng=None)`` is the stateless
entry point used by the bootstrap and benchmark harnesses; stochastic
estimators draw from ``rng`` when given, otherwise from ``random_state``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .coverage import estimate_sc
from .loglinear import estimate_loglinear
from .mtb import estimate_mtb
from .stochastics import check_random_state
from .table import EstimateResult, TrsTable, validate_table
from .thbm import fit_thbm


class TrsEstimator(BaseEstimator):
    """Base class: subclasses implement ``estimate``."""

    method = "?"
    stochastic = False

    def estimate(self, table: TrsTable, rng: np.random.Generator | None = None) -> EstimateResult:
        raise NotImplementedError

    def fit(self, X, y=None):
        table = validate_table(X)
        self.result_ = self.estimate(table)
        self.n_hat_ = self.result_.n_hat
        return self

    def predict(self, X=None) -> float:
        check_is_fitted(self, "n_hat_")
        return self.n_hat_

    def for_bootstrap(self, point: EstimateResult | None = None) -> "TrsEstimator":
        """Copy used inside bootstrap replicates."""
        return clone(self)


class LogLinearEstimator(TrsEstimator):
    def __init__(self, model: str = "LLM", add_half: bool = False):
        self.model = model
        self.add_half = add_half

    @property
    def method(self):
        return self.model.upper()

    def estimate(self, table, rng=None):
        return estimate_loglinear(table, self.model, add_half=self.add_half)


class SampleCoverageEstimator(TrsEstimator):
    method = "SC"

    def estimate(self, table, rng=None):
        return estimate_sc(table)


class MtbEstimator(TrsEstimator):
    method = "MTB"

    def __init__(self, n_starts: int = 5):
        self.n_starts = n_starts

    def estimate(self, table, rng=None):
        return estimate_mtb(table, n_starts=self.n_starts)


class ThbmEstimator(TrsEstimator):
    method = "THBM"
    stochastic = True

    def __init__(self, K: int = 1000, max_iter: int = 500, tol: float = 1e-3,
                 pcond: str = "plugin", mode: str = "expected", random_state=0,
                 bootstrap_K: int = 200, bootstrap_max_iter: int = 100,
                 warm_start: bool = True, N_init: float | None = None,
                 alpha_init: tuple = (0.1, 0.1, 0.1, 0.1)):
        self.K = K
        self.max_iter = max_iter
        self.tol = tol
        self.pcond = pcond
        self.mode = mode
        self.random_state = random_state
        self.bootstrap_K = bootstrap_K
        self.bootstrap_max_iter = bootstrap_max_iter
        self.warm_start = warm_start
        self.N_init = N_init
        self.alpha_init = alpha_init

    def fit_full(self, table: TrsTable, rng: np.random.Generator | None = None):
        rng = check_random_state(self.random_state) if rng is None else rng
        return fit_thbm(table, K=self.K, max_iter=self.max_iter, tol=self.tol,
                        pcond=self.pcond, mode=self.mode, N_init=self.N_init,
                        alpha_init=self.alpha_init, rng=rng)

    def estimate(self, table, rng=None):
        fit = self.fit_full(table, rng)
        self.fit_ = fit
        diag = dict(fit.diagnostics)
        diag["beta_shapes"] = {"m": fit.shapes.m.tolist(), "n": fit.shapes.n.tolist()}
        return EstimateResult("THBM", fit.n_hat, table.x0, label=table.label, diagnostics=diag)

    def for_bootstrap(self, point=None):
        est = clone(self).set_params(K=self.bootstrap_K, max_iter=self.bootstrap_max_iter)
        if self.warm_start and point is not None and point.feasible and "alpha" in point.diagnostics:
            alpha = np.asarray(point.diagnostics["alpha"], dtype=float)
            # keep the start strictly inside the simplex
            if alpha.sum() >= 0.999:
                alpha = alpha * 0.999 / alpha.sum()
            est.set_params(N_init=point.n_hat, alpha_init=tuple(alpha.tolist()))
        return est


class ConstantEstimator(TrsEstimator):
    """Returns a fixed value; with the true N this is the benchmark oracle."""

    def __init__(self, value: float = 0.0, name: str = "ORACLE"):
        self.value = value
        self.name = name

    @property
    def method(self):
        return self.name

    def estimate(self, table, rng=None):
        return EstimateResult(self.name, float(self.value), table.x0, label=table.label)


METHODS = ("thbm", "im", "llm", "qsm", "pqsm", "sc", "mtb")


def make_estimator(name: str, **params) -> TrsEstimator:
    key = name.lower()
    if key in ("im", "llm", "qsm", "pqsm"):
        return LogLinearEstimator(model=key.upper(), **params)
    if key == "sc":
        return SampleCoverageEstimator(**params)
    if key == "mtb":
        return MtbEstimator(**params)
    if key == "thbm":
        return ThbmEstimator(**params)
    raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
