"""Bootstrap intervals, benchmark metrics and incidence rates."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import BoundaryEstimate, TooManyFailures, ZeroDenominator
from .simulate import PopulationSpec, generate
from .stochastics import make_rng
from .table import EstimateResult, TrsTable, _jsonable


def chao_ci(n_hat: float, x0: int, sigma_hat: float, z: float = 1.96) -> tuple[float, float]:
    """Log-transformed interval; ``log(n_hat - x0)`` is treated as normal."""
    if sigma_hat < 0 or not math.isfinite(sigma_hat):
        raise ValueError(f"sigma_hat must be a non-negative number, got {sigma_hat}")
    f0 = n_hat - x0
    if not f0 > 0:
        raise BoundaryEstimate(f"estimate {n_hat} does not exceed the observed count {x0}")
    C = math.exp(z * math.sqrt(math.log1p((sigma_hat / f0) ** 2)))
    return x0 + f0 / C, x0 + f0 * C


def aacir(cases: float, years: float, persons_at_risk: float) -> float:
    """Average annual cumulative incidence per 100,000 person-years."""
    if years == 0 or persons_at_risk == 0:
        raise ZeroDenominator("years and persons at risk must be non-zero")
    if years < 0 or persons_at_risk < 0:
        raise ValueError("years and persons at risk must be positive")
    return cases / (years * persons_at_risk) * 1e5


# ---------------------------------------------------------------------------
# bootstrap


@dataclass
class BootstrapReport:
    method: str
    B: int
    point: EstimateResult
    sigma_hat: float
    ci: tuple[float, float] | None
    replicates: np.ndarray        # nan where the replicate failed
    failures: int
    infeasible: int
    mode: str = "nonparametric"
    notes: dict = field(default_factory=dict)

    @property
    def excluded(self) -> int:
        return self.failures + self.infeasible

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "B": self.B,
            "mode": self.mode,
            "sigma_hat": _jsonable(self.sigma_hat),
            "ci": None if self.ci is None else [round(self.ci[0], 2), round(self.ci[1], 2)],
            "failures": self.failures,
            "infeasible": self.infeasible,
            "notes": _jsonable(self.notes),
        }


def resample_table(table: TrsTable, rng: np.random.Generator, mode: str = "nonparametric",
                   n_hat: float | None = None) -> TrsTable:
    counts = table.counts.astype(float)
    x0 = table.x0
    if mode == "nonparametric":
        draw = rng.multinomial(x0, counts / x0)
    elif mode == "parametric":
        if n_hat is None or not n_hat >= x0:
            raise ValueError("parametric resampling needs a feasible point estimate")
        N = int(round(n_hat))
        probs = np.append(counts, N - x0) / N
        draw = rng.multinomial(N, probs)[:7]
    else:
        raise ValueError(f"unknown bootstrap mode {mode!r}")
    return TrsTable(*(int(v) for v in draw), label=table.label)


def _one_replicate(estimator, table, seed, stream, b, mode, n_hat):
    rep = resample_table(table, make_rng(seed, stream + (b, 0)), mode, n_hat)
    if rep.x0 == 0:
        return math.nan, "failed"
    try:
        res = estimator.estimate(rep, rng=make_rng(seed, stream + (b, 1)))
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError):
        return math.nan, "failed"
    if not res.feasible:
        return res.n_hat, "infeasible"
    return res.n_hat, "ok"


def bootstrap(table: TrsTable, estimator, B: int = 1000, seed: int = 0,
              mode: str = "nonparametric", stream: tuple[int, ...] = (),
              point: EstimateResult | None = None, n_jobs: int = 1,
              max_failure_rate: float = 0.5) -> BootstrapReport:
    """Bootstrap standard error of an estimator and the matching log-scale interval.

    ``estimator`` needs ``estimate(table, rng)`` and may provide
    ``for_bootstrap()`` returning a cheaper copy for the replicates. Replicate
    ``b`` resamples from stream ``stream + (b, 0)`` and runs the estimator on
    ``stream + (b, 1)``, so results do not depend on ``n_jobs``.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if point is None:
        point = estimator.estimate(table, rng=make_rng(seed, stream))
    rep_est = estimator.for_bootstrap(point) if hasattr(estimator, "for_bootstrap") else estimator
    args = (table, seed, tuple(stream))
    if n_jobs == 1:
        out = [_one_replicate(rep_est, *args, b, mode, point.n_hat) for b in range(B)]
    else:
        from joblib import Parallel, delayed
        out = Parallel(n_jobs=n_jobs)(
            delayed(_one_replicate)(rep_est, *args, b, mode, point.n_hat) for b in range(B))

    values = np.array([v for v, _ in out], dtype=float)
    status = [s for _, s in out]
    failures = status.count("failed")
    infeasible = status.count("infeasible")
    good = values[[s == "ok" for s in status]]
    name = getattr(point, "method", "?")
    if failures + infeasible > max_failure_rate * B or good.size < 2:
        raise TooManyFailures(f"{name}: {failures} failed and {infeasible} infeasible of {B} replicates")
    values[[s != "ok" for s in status]] = math.nan
    sigma = float(np.std(good, ddof=1))
    notes: dict = {}
    if hasattr(rep_est, "K"):
        notes["replicate_K"] = rep_est.K
        notes["replicate_max_iter"] = rep_est.max_iter
        notes["replicate_warm_start"] = rep_est.N_init is not None
    ci = None
    if point.feasible:
        try:
            ci = chao_ci(point.n_hat, table.x0, sigma)
        except BoundaryEstimate:
            ci = (float(table.x0), float(table.x0))
            notes["boundary"] = True
    return BootstrapReport(name, B, point, sigma, ci, values, failures, infeasible, mode, notes)


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class MethodSummary:
    method: str
    RMAE: float
    CP: float
    LCI: float
    replicates: int
    evaluated: int
    infeasible: int
    failed: int

    @property
    def infeasible_rate(self) -> float:
        return self.infeasible / self.replicates if self.replicates else 0.0


@dataclass
class BenchmarkReport:
    N: int
    R: int
    B: int
    seed: int
    population: dict
    rows: list[MethodSummary]
    estimates: dict[str, list]

    CSV_COLUMNS = ("method", "RMAE", "CP", "LCI", "infeasible_rate")

    def row(self, method: str) -> MethodSummary:
        for r in self.rows:
            if r.method.upper() == method.upper():
                return r
        raise KeyError(method)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.method, _fmt(r.RMAE), _fmt(r.CP), _fmt(r.LCI), _fmt(r.infeasible_rate)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "N": self.N, "R": self.R, "B": self.B, "seed": self.seed,
            "population": self.population,
            "methods": [
                {"method": r.method, "RMAE": _num(r.RMAE), "CP": _num(r.CP), "LCI": _num(r.LCI),
                 "infeasible_rate": _num(r.infeasible_rate), "replicates": r.replicates,
                 "evaluated": r.evaluated, "infeasible": r.infeasible, "failed": r.failed}
                for r in self.rows
            ],
            "estimates": {k: [_num(v) for v in vals] for k, vals in self.estimates.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _fmt(v: float) -> str:
    return "" if not math.isfinite(v) else f"{v:.6f}"


def _num(v):
    v = float(v)
    return round(v, 6) if math.isfinite(v) else None


def benchmark(spec: PopulationSpec, R: int, estimators: Sequence, seed: int = 0, B: int = 200,
              mode: str = "nonparametric", n_jobs: int = 1, progress=None) -> BenchmarkReport:
    """Simulate R tables, estimate with every method and bootstrap each interval.

    Replicates whose estimate failed, was infeasible, or whose bootstrap had
    too many failures are excluded from RMAE, CP and LCI and counted instead.
    LCI is the mean interval length divided by N.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    N = spec.N
    names = [e.method for e in estimators]
    est: dict[str, list] = {n: [] for n in names}
    status: dict[str, list] = {n: [] for n in names}
    cis: dict[str, list] = {n: [] for n in names}
    for r in range(R):
        table = generate(spec, make_rng(seed, r), label=f"rep{r:04d}").table
        for j, (name, e) in enumerate(zip(names, estimators)):
            stream = (1, r, j)
            try:
                point = e.estimate(table, rng=make_rng(seed, stream)) if table.x0 > 0 else None
            except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError):
                point = None
            if point is None:
                est[name].append(math.nan)
                status[name].append("failed")
                cis[name].append(None)
                continue
            est[name].append(point.n_hat)
            if not point.feasible:
                status[name].append("infeasible")
                cis[name].append(None)
                continue
            try:
                rep = bootstrap(table, e, B=B, seed=seed, mode=mode, stream=stream,
                                point=point, n_jobs=n_jobs)
                cis[name].append(rep.ci)
                status[name].append("ok")
            except TooManyFailures:
                cis[name].append(None)
                status[name].append("failed")
        if progress is not None:
            progress(r + 1, R)

    rows = []
    for name in names:
        vals = np.asarray(est[name], dtype=float)
        ok = np.array([s == "ok" for s in status[name]])
        if ok.any():
            rmae = float(np.mean(np.abs(vals[ok] - N)) / N)
            ints = [c for c, k in zip(cis[name], ok) if k]
            cp = float(np.mean([lo <= N <= hi for lo, hi in ints]))
            lci = float(np.mean([hi - lo for lo, hi in ints]) / N)
        else:
            rmae = cp = lci = math.nan
        rows.append(MethodSummary(name, rmae, cp, lci, R, int(ok.sum()),
                                  status[name].count("infeasible"), status[name].count("failed")))
    return BenchmarkReport(N, R, B, seed, spec.to_dict(), rows, est)
