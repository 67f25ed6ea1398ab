"""Acceptance criteria 1-15, one recorded PASS/FAIL line each.

Criteria 8 and 9 share one desk-scale benchmark run (population P2, N=500,
R=100, B=200) and are marked slow.
"""

import json
import math
import statistics
import time

import numpy as np
import pytest
from scipy import stats

from trsmse.cli import main
from trsmse.coverage import estimate_sc
from trsmse.estimators import make_estimator
from trsmse.loglinear import DESIGNS, estimate_loglinear, irls_fit, llm_closed_form
from trsmse.mtb import estimate_mtb
from trsmse.simulate import preset
from trsmse.stochastics import make_rng
from trsmse.table import TrsTable, builtin_dataset
from trsmse.thbm import (
    TWO_CELLS,
    BetaShapes,
    cell_probs_array,
    fit_thbm,
    latent_split_probs,
    marginal_loglik_oracle,
    mc_marginal_likelihood,
    mstep,
    sample_latent_batch,
)
from trsmse.uncertainty import aacir, benchmark, bootstrap

import thbm_oracles as oracle

NAMES = ("als_deployed", "als_nondeployed", "wtc")
SHORT = {"als_deployed": "deployed", "als_nondeployed": "non-deployed", "wtc": "WTC"}


def _data():
    return [builtin_dataset(n) for n in NAMES]


def _estimates(fn, targets, tol):
    t = time.perf_counter()
    got = [fn(tab) for tab in _data()]
    elapsed = time.perf_counter() - t
    ok = [abs(round(g) - e) <= tol(e) for g, e in zip(got, targets)]
    detail = ", ".join(f"{SHORT[n]} {g:.2f} (target {e}{'' if k else ' MISS'})"
                       for n, g, e, k in zip(NAMES, got, targets, ok))
    return got, all(ok), elapsed, detail


def test_criterion_01_llm(acceptance):
    _, ok, dt, detail = _estimates(lambda t: estimate_loglinear(t, "LLM").n_hat, (45, 72, 12124), lambda e: 1)
    acceptance(1, ok and dt < 1, f"LLM {detail}; {dt:.3f}s")


def test_criterion_02_sc(acceptance):
    got, ok, dt, detail = _estimates(lambda t: estimate_sc(t).n_hat, (44, 74, 11977), lambda e: 1)
    hand = abs(got[0] - 43.9) < 0.05
    acceptance(2, ok and hand and dt < 1, f"SC {detail}; deployed vs hand value 43.9: {hand}; {dt:.3f}s")


def test_criterion_03_qsm_pqsm(acceptance):
    _, ok_q, _, dq = _estimates(lambda t: estimate_loglinear(t, "QSM").n_hat, (43, 70, 11906), lambda e: 1)
    _, ok_p, _, dp = _estimates(lambda t: estimate_loglinear(t, "PQSM").n_hat, (45, 72, 14698), lambda e: 2)
    acceptance(3, ok_q and ok_p, f"QSM {dq}; PQSM {dp}")


def test_criterion_04_mtb(acceptance):
    res = [estimate_mtb(t) for t in _data()]
    targets = (40, 134, 8974)
    ok = [abs(r.n_hat - e) <= 0.02 * e for r, e in zip(res, targets)]
    boundary = res[0].diagnostics["boundary"] and round(res[0].n_hat) == 40
    detail = ", ".join(f"{SHORT[n]} {r.n_hat:.1f} (target {e} +-2%{'' if k else ' MISS'})"
                       for n, r, e, k in zip(NAMES, res, targets, ok))
    acceptance(4, all(ok) and boundary, f"M_tb {detail}; deployed at boundary: {boundary}")


def test_criterion_05_aacir(acceptance):
    a, b = aacir(53, 10, 696118), aacir(78, 10, 1786215)
    ok = abs(a - 0.76) <= 0.005 and abs(b - 0.44) <= 0.005
    acceptance(5, ok, f"AACIR {a:.4f} (0.76), {b:.4f} (0.44)")


def test_criterion_06_thbm_bundled(acceptance):
    bands = {"als_deployed": (45, 61), "als_nondeployed": (66, 90), "wtc": (12500, 15300)}
    parts, ok = [], True
    alpha0 = None
    for name, (lo, hi) in bands.items():
        fits = [fit_thbm(builtin_dataset(name), K=1000, seed=s) for s in range(5)]
        med = statistics.median(f.n_hat for f in fits)
        hit = lo <= med <= hi
        ok &= hit
        parts.append(f"{SHORT[name]} median {med:.0f} in [{lo}, {hi}]: {hit}")
        if name == "wtc":
            alpha0 = statistics.median(f.alpha0_hat for f in fits)
    a_ok = 0.25 <= alpha0 <= 0.47
    acceptance(6, ok and a_ok, "THBM " + "; ".join(parts) + f"; WTC alpha0 {alpha0:.3f} in [0.25, 0.47]: {a_ok}")


def test_criterion_07_sc_bootstrap(acceptance):
    tab = builtin_dataset("als_nondeployed")
    sc = make_estimator("sc")
    rep = bootstrap(tab, sc, B=1000, seed=0)
    again = bootstrap(tab, sc, B=1000, seed=0)
    lo, hi = rep.ci
    ok = abs(lo - 69) <= 0.15 * 69 and abs(hi - 98) <= 0.15 * 98
    same = rep.to_dict() == again.to_dict()
    acceptance(7, ok and same, f"SC bootstrap CI ({lo:.1f}, {hi:.1f}) vs (69, 98) +-15%; "
                               f"excluded {rep.excluded}/1000; repeatable: {same}")


@pytest.fixture(scope="module")
def desk_benchmark():
    ests = [make_estimator("thbm"), make_estimator("im"), make_estimator("llm"), make_estimator("sc")]
    t = time.perf_counter()
    rep = benchmark(preset("p2", 500), R=100, estimators=ests, seed=0, B=200)
    return rep, time.perf_counter() - t


def _row_text(rep, names):
    return ", ".join(f"{n} {getattr(rep.row(n), 'RMAE'):.4f}/{rep.row(n).CP:.2f}" for n in names)


@pytest.mark.slow
def test_criterion_08_rmae(acceptance, desk_benchmark):
    rep, dt = desk_benchmark
    th, im, llm = (rep.row(n).RMAE for n in ("THBM", "IM", "LLM"))
    ok = th < im and th <= llm and dt < 1800
    acceptance(8, ok, f"P2 N=500 R=100 B=200 RMAE THBM {th:.4f} < IM {im:.4f}: {th < im}, "
                      f"<= LLM {llm:.4f}: {th <= llm}; runtime {dt / 60:.1f} min")


@pytest.mark.slow
def test_criterion_09_cp(acceptance, desk_benchmark):
    rep, _ = desk_benchmark
    th, sc, im = (rep.row(n).CP for n in ("THBM", "SC", "IM"))
    ok = th >= sc and th >= im
    acceptance(9, ok, f"CP THBM {th:.2f} >= SC {sc:.2f}: {th >= sc}, >= IM {im:.2f}: {th >= im}")


def test_criterion_10_normalisation(acceptance):
    rng = make_rng(10)
    alpha = rng.dirichlet(np.ones(5), 10_000)[:, 1:]
    P = rng.uniform(0, 1, (10_000, 3))
    err = float(np.max(np.abs(cell_probs_array(alpha, P).sum(-1) - 1)))
    acceptance(10, err < 1e-12, f"max |sum - 1| over 1e4 draws = {err:.2e}")


def test_criterion_11_sampler_suite(acceptance):
    rng = make_rng(11)
    ones = TrsTable(1, 1, 1, 1, 1, 1, 1)
    K = 100_000
    worst_p, worst_q = 1.0, 0.0
    for g in range(20):
        alpha = rng.dirichlet(np.ones(5))[1:]
        P = rng.uniform(0.05, 0.95, 3)
        ref = oracle.split_probs(alpha, P)
        q111, q000, qtwo = latent_split_probs(alpha, P[None, :])
        worst_q = max(worst_q, np.max(np.abs(q111[0] - ref["111"])), np.max(np.abs(q000[0] - ref["000"])),
                      max(abs(qtwo[0, j] - ref[c][0]) for j, c in enumerate(TWO_CELLS)))
        batch = sample_latent_batch(ones, 8, alpha, np.tile(P, (K, 1)), make_rng(1100 + g))
        for cell, draws in (("111", batch.y111), ("000", batch.y000)):
            obs, exp = draws.sum(0), ref[cell] * K
            worst_p = min(worst_p, stats.chisquare(obs, exp).pvalue)
        for j, c in enumerate(TWO_CELLS):
            k, p = int(batch.two[:, j].sum()), ref[c][0]
            worst_p = min(worst_p, stats.chisquare([k, K - k], [p * K, (1 - p) * K]).pvalue)
    ok = worst_p > 0.001 and worst_q < 1e-12
    acceptance(11, ok, f"20-point grid, 1e5 draws: min chi-square p = {worst_p:.4f}; "
                       f"q formulas vs brute force max error {worst_q:.1e}")


def test_criterion_12_loglinear_identities(acceptance):
    rng = make_rng(12)
    worst_llm = worst_q = 0.0
    Xq, Xp = DESIGNS["QSM"].matrix(), DESIGNS["PQSM"].matrix()
    for _ in range(100):
        t = TrsTable(*(int(v) for v in rng.integers(1, 500, 7)))
        worst_llm = max(worst_llm, abs(estimate_loglinear(t, "LLM").n_hat / llm_closed_form(t) - 1))
        mq, mp = irls_fit(t, "QSM").fitted, irls_fit(t, "PQSM").fitted
        y = t.counts
        # fitted means satisfy the model's product constraints and its score equations
        worst_q = max(worst_q,
                      abs(mq[1] * mq[6] / (mq[2] * mq[5]) - 1), abs(mq[1] * mq[6] / (mq[3] * mq[4]) - 1),
                      abs(mp[2] * mp[5] / (mp[3] * mp[4]) - 1),
                      np.max(np.abs(Xq.T @ mq / (Xq.T @ y) - 1)), np.max(np.abs(Xp.T @ mp / (Xp.T @ y) - 1)))
    ok = worst_llm < 1e-6 and worst_q < 1e-6
    acceptance(12, ok, f"LLM vs closed form max rel {worst_llm:.1e}; QSM/PQSM identities max rel {worst_q:.1e}")


def test_criterion_13_mstep_oracle(acceptance):
    rng = make_rng(13)
    worst = 0.0
    for _ in range(50):
        t = TrsTable(*(int(v) for v in rng.integers(0, 8, 7)))
        if t.x0 == 0:
            t = TrsTable(1, 1, 0, 0, 2, 0, 1)
        alpha = rng.dirichlet(np.ones(5))[1:] * 0.8
        N = t.x0 + int(rng.integers(0, 3 * t.x0 + 1))
        batch = sample_latent_batch(t, N, alpha, rng.uniform(0.05, 0.95, (int(rng.integers(1, 20)), 3)), rng)
        _, _, val, obj = mstep(t, batch, N, alpha)
        grid = obj(np.arange(obj.lower, 10 * t.x0 + N + 50))
        worst = max(worst, grid.max() - val)
    acceptance(13, worst <= 1e-8, f"50 instances, max (grid best - M-step) = {worst:.1e}")


def test_criterion_14_marginal_oracle(acceptance):
    rng = make_rng(14)
    worst = 0.0
    for i in range(10):
        t = TrsTable(*(int(v) for v in rng.integers(0, 4, 7)))
        if t.x0 == 0:
            t = TrsTable(1, 1, 0, 0, 1, 0, 0)
        N = t.x0 + int(rng.integers(0, 4))
        alpha = rng.dirichlet(np.ones(5))[1:] * 0.7
        shapes = BetaShapes(rng.uniform(0.8, 5, 3), rng.uniform(0.8, 5, 3))
        quad = math.exp(marginal_loglik_oracle(t, N, alpha, shapes, resolution=64, check=True))
        mc, se = mc_marginal_likelihood(t, N, alpha, shapes, 200_000, make_rng(1400 + i))
        worst = max(worst, abs(mc - quad) / se)
    acceptance(14, worst < 3, f"10 tiny instances, max |MC - quadrature| = {worst:.2f} SE")


def test_criterion_15_determinism(acceptance, tmp_path, capsys):
    def pipeline(tag):
        d = tmp_path / tag
        est = d / "estimate.json"
        main(["estimate", "--dataset", "als_deployed", "--method", "all", "--bootstrap", "20",
              "--K", "200", "--max-iter", "60", "--seed", "5", "--trace", str(d / "trace.csv"), "--out", str(est)])
        main(["simulate", "--pop", "p2", "--n", "300", "--reps", "2", "--seed", "5", "--out", str(d / "sim")])
        main(["benchmark", "--pop", "p2", "--n", "300", "--reps", "2", "--methods", "thbm,llm,sc",
              "--K", "200", "--B", "10", "--seed", "5", "--out", str(d / "bench.csv")])
        files = ["estimate.json", "trace.csv", "bench.csv", "bench.json", "sim/rep0000.json", "sim/truth.json"]
        return {f: (d / f).read_bytes() for f in files}

    a, b = pipeline("a"), pipeline("b")
    capsys.readouterr()
    same = [f for f in a if a[f] == b[f]]
    json.loads(a["estimate.json"])
    acceptance(15, len(same) == len(a), f"{len(same)}/{len(a)} report files byte-identical across two runs")
