import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import logit

from trsmse.exceptions import DomainError
from trsmse.mtb import MtbParams, estimate_mtb, mtb_loglik, mtb_stats, profile_loglik
from trsmse.table import TrsTable


def test_stats_deployed(deployed):
    s = mtb_stats(deployed)
    assert (s.u1, s.u2, s.u3, s.m2, s.m3) == (29, 6, 5, 12, 26)
    assert (s.M2, s.M3, s.M4) == (29, 35, 40)
    assert s.m2 + s.m3 == 38


def test_stats_ones(ones):
    s = mtb_stats(ones)
    assert (s.u1, s.u2, s.u3, s.m2, s.m3) == (4, 2, 1, 2, 3)


def test_stats_single_capture():
    s = mtb_stats(TrsTable(0, 0, 0, 0, 1, 0, 0))
    assert (s.u1, s.u2, s.u3, s.m2, s.m3) == (1, 0, 0, 0, 0)


def test_phi_exponent(deployed):
    s = mtb_stats(deployed)
    p = MtbParams(50, 0.5, 0.3, 0.4, 0.5)
    q = MtbParams(50, 0.5, 0.3, 0.4, 0.5 * math.e)
    # phi enters as phi^(m2+m3) times factors (1 - phi f_l)^(M - m)
    extra = sum((M - m) * (math.log1p(-q.phi * f) - math.log1p(-p.phi * f))
                for M, m, f in ((s.M2, s.m2, 0.3), (s.M3, s.m3, 0.4)))
    assert mtb_loglik(q, s) - mtb_loglik(p, s) == pytest.approx(38 + extra, rel=1e-12)


def test_list_one_only_monotone_in_N():
    s = mtb_stats(TrsTable(0, 0, 0, 0, 5, 0, 0))
    f = 1 - 1e-6
    vals = [mtb_loglik(MtbParams(N, f, f, f, 0.999), s) for N in range(5, 11)]
    assert all(math.isfinite(v) for v in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("N,f1", [(10, 0.3), (25, 0.7), (7.5, 0.5)])
def test_binomial_reduction(N, f1):
    s = mtb_stats(TrsTable(0, 0, 0, 0, 6, 0, 0))
    ll = mtb_loglik(MtbParams(N, f1, 0.0, 0.0, 1.0), s)
    ref = (math.lgamma(N + 1) - math.lgamma(N - 6 + 1) + 6 * math.log(f1)
           + (N - 6) * math.log1p(-f1))
    assert ll == pytest.approx(ref, rel=1e-12)
    if float(N).is_integer():
        assert ll == pytest.approx(stats.binom.logpmf(6, N, f1) + math.lgamma(7), rel=1e-12)


@pytest.mark.parametrize("params", [MtbParams(50, 0.5, 0.6, 0.3, 2.0), MtbParams(50, 0.5, 0.2, 0.3, -1),
                                    MtbParams(30, 0.5, 0.2, 0.3, 1.0), MtbParams(50, 1.2, 0.2, 0.3, 1.0)])
def test_domain_errors(deployed, params):
    with pytest.raises(DomainError):
        mtb_loglik(params, mtb_stats(deployed))


def test_deployed_boundary(deployed):
    res = estimate_mtb(deployed)
    assert res.diagnostics["boundary"] is True
    assert round(res.n_hat) == 40


def _theta(res):
    d = res.diagnostics
    return np.array([math.log(d["N_continuous"] - res.x0 + 1), *logit(d["f"]), math.log(d["phi"])])


@pytest.mark.parametrize("table", [TrsTable(10, 2, 12, 4, 5, 2, 5), TrsTable(14, 21, 7, 5, 5, 8, 7),
                                   TrsTable(20, 15, 12, 10, 30, 25, 20)])
def test_local_optimality_audit(table):
    from trsmse.mtb import _negloglik
    res = estimate_mtb(table)
    s = mtb_stats(table)
    theta = _theta(res)
    base = _negloglik(theta, s)
    assert -base == pytest.approx(res.diagnostics["loglik"], abs=1e-9)
    for i in range(5):
        for h in (1e-4, -1e-4):
            t = theta.copy()
            t[i] += h
            assert _negloglik(t, s) >= base - 1e-9
    assert res.diagnostics["profile_audit_gap"] < 1e-6


def test_profile_is_below_joint_max(nondeployed):
    res = estimate_mtb(nondeployed)
    s = mtb_stats(nondeployed)
    for N in (70, 90, 134):
        assert profile_loglik(s, N) <= res.diagnostics["loglik"] + 1e-7
