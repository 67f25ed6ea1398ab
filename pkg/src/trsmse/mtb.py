"""Time-varying capture with a constant behavioural response (M_tb).

Recapture probabilities are proportional to first-capture probabilities,
``c_l = phi * f_l``, for lists 2 and 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, gammaln, logit, xlog1py, xlogy

from .exceptions import DomainError, NonConvergence
from .table import EstimateResult, TrsTable


@dataclass(frozen=True)
class MtbStats:
    u1: int
    u2: int
    u3: int
    m2: int
    m3: int
    M2: int
    M3: int
    M4: int


@dataclass(frozen=True)
class MtbParams:
    N: float
    f1: float
    f2: float
    f3: float
    phi: float

    def check(self, stats: MtbStats) -> None:
        for name in ("f1", "f2", "f3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} = {v} outside [0, 1]")
        if self.phi <= 0:
            raise DomainError(f"phi must be positive, got {self.phi}")
        if self.phi * self.f2 >= 1 or self.phi * self.f3 >= 1:
            raise DomainError("phi * f_l must stay below 1")
        if self.N < stats.M4:
            raise DomainError(f"N = {self.N} is below the observed count {stats.M4}")


def mtb_stats(table: TrsTable) -> MtbStats:
    x = table
    u1 = x.n1
    u2 = x.x011 + x.x010
    return MtbStats(u1=u1, u2=u2, u3=x.x001, m2=x.x111 + x.x110,
                    m3=x.x111 + x.x101 + x.x011, M2=u1, M3=u1 + u2, M4=x.x0)


def mtb_loglik(params: MtbParams, stats: MtbStats) -> float:
    params.check(stats)
    return _loglik(params.N, params.f1, params.f2, params.f3, params.phi, stats)


def _loglik(N, f1, f2, f3, phi, s: MtbStats) -> float:
    val = gammaln(N + 1) - gammaln(N - s.M4 + 1)
    val += xlogy(s.u1, f1) + xlog1py(N - s.u1, -f1)
    val += xlogy(s.m2 + s.m3, phi)
    for u, m, M, Mn, f in ((s.u2, s.m2, s.M2, s.M3, f2), (s.u3, s.m3, s.M3, s.M4, f3)):
        val += xlogy(u + m, f) + xlog1py(N - Mn, -f) + xlog1py(M - m, -phi * f)
    return float(val)


def _unpack(theta, x0):
    t, l1, l2, l3, lp = theta
    return x0 + math.expm1(t), expit(l1), expit(l2), expit(l3), math.exp(lp)


def _negloglik(theta, s: MtbStats) -> float:
    if theta[0] < 0 or theta[0] > 30 or abs(theta[4]) > 30:
        return math.inf
    N, f1, f2, f3, phi = _unpack(theta, s.M4)
    if phi * f2 >= 1 or phi * f3 >= 1:
        return math.inf
    v = _loglik(N, f1, f2, f3, phi, s)
    return -v if math.isfinite(v) else math.inf


_NM_OPTS = {"xatol": 1e-10, "fatol": 1e-12, "maxiter": 40000, "maxfev": 80000}


def _starts(s: MtbStats, n_starts: int) -> list[np.ndarray]:
    x0 = s.M4
    out = []
    for N0, phi0 in ((1.2 * x0, 1.0), (1.5 * x0, 0.8), (2.0 * x0, 1.2), (3.0 * x0, 0.6), (x0 + 1.0, 1.0),
                     (5.0 * x0, 1.0), (1.1 * x0, 1.5)):
        f = np.clip(np.array([s.u1, s.u2 + s.m2, s.u3 + s.m3]) / N0, 0.02, 0.9)
        phi0 = min(phi0, 0.95 / f[1:].max())
        out.append(np.array([math.log(N0 - x0 + 1), *logit(f), math.log(phi0)]))
    return out[:n_starts]


def profile_loglik(stats: MtbStats, N: float) -> float:
    """Maximum log-likelihood over (f, phi) at fixed N."""
    lt = math.log(N - stats.M4 + 1)
    best = -math.inf
    for th in _starts(stats, 5):
        res = minimize(lambda z: _negloglik(np.concatenate([[lt], z]), stats), th[1:],
                       method="Nelder-Mead", options=_NM_OPTS)
        best = max(best, -res.fun)
    return best


def estimate_mtb(table: TrsTable, n_starts: int = 5, audit_radius: int = 3) -> EstimateResult:
    s = mtb_stats(table)
    fits = []
    for th in _starts(s, n_starts):
        if not math.isfinite(_negloglik(th, s)):
            continue
        res = minimize(_negloglik, th, args=(s,), method="Nelder-Mead", options=_NM_OPTS)
        # restart once from the reported optimum; the simplex can stall on ridges
        res = minimize(_negloglik, res.x, args=(s,), method="Nelder-Mead", options=_NM_OPTS)
        if math.isfinite(res.fun):
            fits.append(res)
    if not fits:
        raise NonConvergence("every M_tb start failed")
    best = min(fits, key=lambda r: r.fun)
    theta = best.x
    loglik = -best.fun

    # boundary candidate: maximise (f, phi) with N pinned at x0
    at_x0 = minimize(lambda z: _negloglik(np.concatenate([[0.0], z]), s), theta[1:],
                     method="Nelder-Mead", options=_NM_OPTS)
    if -at_x0.fun > loglik:
        theta, loglik = np.concatenate([[0.0], at_x0.x]), -at_x0.fun

    N, f1, f2, f3, phi = _unpack(theta, s.M4)
    centre = int(round(N))
    grid = [n for n in range(centre - audit_radius, centre + audit_radius + 1) if n >= s.M4]
    profile = {n: profile_loglik(s, n) for n in grid}
    audit_gap = max(profile.values()) - loglik
    boundary = N - s.M4 < 0.5
    diag = {
        "loglik": loglik,
        "N_continuous": N,
        "f": [f1, f2, f3],
        "phi": phi,
        "boundary": boundary,
        "starts": len(fits),
        "profile_audit_gap": audit_gap,
        "converged": bool(best.success),
    }
    return EstimateResult("MTB", float(N), table.x0, label=table.label, diagnostics=diag)
