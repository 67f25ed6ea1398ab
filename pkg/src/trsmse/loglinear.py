"""Poisson log-linear models on the seven observed cells.

All four models share one IRLS engine and differ only in their design
matrices. Every non-intercept column vanishes at pattern 000, so the fitted
mean of the unobserved cell is ``exp(intercept)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .exceptions import SingularDesign
from .table import CELL_PATTERNS, EstimateResult, TrsTable

Column = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

MAX_ITER = 100
COEF_TOL = 1e-10
SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class DesignSpec:
    name: str
    columns: tuple[tuple[str, Column], ...]

    def matrix(self, patterns: np.ndarray = CELL_PATTERNS) -> np.ndarray:
        i, j, k = (patterns[:, c].astype(float) for c in range(3))
        return np.column_stack([np.broadcast_to(f(i, j, k), i.shape) for _, f in self.columns])

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.columns)


_INTERCEPT = ("1", lambda i, j, k: np.ones_like(i))
_MAIN = (("i", lambda i, j, k: i), ("j", lambda i, j, k: j), ("k", lambda i, j, k: k))

DESIGNS = {
    "IM": DesignSpec("IM", (_INTERCEPT, *_MAIN)),
    "LLM": DesignSpec("LLM", (_INTERCEPT, *_MAIN,
                              ("ij", lambda i, j, k: i * j),
                              ("ik", lambda i, j, k: i * k),
                              ("jk", lambda i, j, k: j * k))),
    "QSM": DesignSpec("QSM", (_INTERCEPT, *_MAIN,
                              ("ij+ik+jk", lambda i, j, k: i * j + i * k + j * k))),
    "PQSM": DesignSpec("PQSM", (_INTERCEPT, *_MAIN,
                                ("ij", lambda i, j, k: i * j),
                                ("ik+jk", lambda i, j, k: i * k + j * k))),
}


@dataclass
class GlmFit:
    coefficients: np.ndarray
    fitted: np.ndarray
    deviance: float
    converged: bool
    iterations: int
    separation: bool = False
    design: str = ""
    history: list = field(default_factory=list)

    @property
    def m000(self) -> float:
        return float(np.exp(self.coefficients[0]))


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    return float(2.0 * np.sum(xlogy(y, y) - xlogy(y, mu) - (y - mu)))


def get_design(model: str | DesignSpec) -> DesignSpec:
    if isinstance(model, DesignSpec):
        return model
    try:
        return DESIGNS[model.upper()]
    except KeyError:
        raise ValueError(f"unknown log-linear model {model!r}; choose from {', '.join(DESIGNS)}") from None


def irls_fit(table: TrsTable | np.ndarray, design: str | DesignSpec,
             max_iter: int = MAX_ITER, tol: float = COEF_TOL) -> GlmFit:
    """Poisson log-link maximum likelihood by IRLS with step halving."""
    design = get_design(design)
    y = (table.counts if isinstance(table, TrsTable) else np.asarray(table)).astype(float)
    X = design.matrix()
    p = X.shape[1]
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesign(f"design {design.name} is rank deficient")
    x0 = y.sum()
    if x0 < p:
        raise SingularDesign(f"{p} parameters cannot be fitted from {x0:g} observations")

    beta = np.zeros(p)
    beta[0] = np.log(x0 / 7.0)
    mu = np.exp(X @ beta)
    dev = poisson_deviance(y, mu)
    converged = separation = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        z = eta + (y - mu) / mu
        XtW = X.T * mu
        try:
            new = np.linalg.solve(XtW @ X, XtW @ z)
        except np.linalg.LinAlgError:
            new = np.linalg.lstsq(XtW @ X, XtW @ z, rcond=None)[0]
        step = new - beta
        # halve the step while the deviance goes up
        for _ in range(30):
            cand = beta + step
            mu_c = np.exp(np.clip(X @ cand, -700, 700))
            dev_c = poisson_deviance(y, mu_c)
            if dev_c <= dev * (1 + 1e-12) + 1e-12:
                break
            step = step / 2
        beta, mu, dev = cand, mu_c, dev_c
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            separation = True
            break
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    return GlmFit(beta, mu, dev, converged, it, separation, design.name)


def estimate_loglinear(table: TrsTable, model: str | DesignSpec = "LLM",
                       add_half: bool = False) -> EstimateResult:
    design = get_design(model)
    y = table.counts.astype(float) + (0.5 if add_half else 0.0)
    fit = irls_fit(y, design)
    n_hat = table.x0 + fit.m000
    diag = {
        "coefficients": dict(zip(design.column_names, fit.coefficients.tolist())),
        "m000": fit.m000,
        "deviance": fit.deviance,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "add_half": add_half,
    }
    if fit.separation:
        diag["zero_cell_separation"] = True
    return EstimateResult(design.name, float(n_hat), table.x0, label=table.label, diagnostics=diag)


def llm_closed_form(table: TrsTable) -> float:
    """Saturated-model fill of cell 000; infinite when a denominator cell is empty."""
    den = table.x101 * table.x011 * table.x110
    num = table.x111 * table.x001 * table.x100 * table.x010
    if den == 0:
        return float("inf")
    return table.x0 + num / den
