"""Trivariate heterogeneous Bernoulli model (THBM) fitted by Monte-Carlo EM.

Each individual follows one of five copy regimes over the latent Bernoulli
draws ``X1, X2, X3``:

====== =================== ==================
regime observed (Z1,Z2,Z3) weight
====== =================== ==================
1      (X1, X1, X3)        alpha_1
2      (X1, X2, X2)        alpha_2
3      (X1, X2, X1)        alpha_3
4      (X1, X1, X1)        alpha_4
5      (X1, X2, X3)        1 - alpha_0
====== =================== ==================

Arrays indexed by regime use the order ``(independent, 1, 2, 3, 4)``, i.e.
component ``u = 0`` is the independent regime. This matches the latent split
of cells 111 and 000 (``y111[0]`` is the independent share).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln, logsumexp, xlogy

from .exceptions import GridTooCoarse
from .stochastics import make_rng
from .table import CellProbabilities, TrsTable

# cells whose count splits into an independent part and one dependent regime
TWO_CELLS = ("110", "011", "100", "101", "010", "001")
# dependent regime (1..3) feeding each two-component cell
TWO_CELL_REGIME = (1, 2, 2, 3, 3, 1)

_P_EPS = 1e-12
SHAPE_FLOOR = 0.5


@dataclass(frozen=True)
class DependenceAlpha:
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    a4: float = 0.0

    def __post_init__(self):
        v = self.as_array()
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError(f"mixture weights must be non-negative, got {tuple(v)}")
        if v.sum() > 1 + 1e-12:
            raise ValueError(f"mixture weights sum to {v.sum()} > 1")

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "DependenceAlpha":
        if len(values) != 4:
            raise ValueError("need four mixture weights")
        return cls(*(float(v) for v in values))

    @property
    def a0(self) -> float:
        return self.a1 + self.a2 + self.a3 + self.a4

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.a4], dtype=float)

    def regime_weights(self) -> np.ndarray:
        """Weights in regime order ``(independent, 1, 2, 3, 4)``."""
        return np.concatenate([[max(1.0 - self.a0, 0.0)], self.as_array()])


@dataclass(frozen=True)
class CaptureProbs:
    P1: float
    P2: float
    P3: float

    def __post_init__(self):
        for name in ("P1", "P2", "P3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
            object.__setattr__(self, name, min(max(float(v), _P_EPS), 1.0 - _P_EPS))

    def as_array(self) -> np.ndarray:
        return np.array([self.P1, self.P2, self.P3])


@dataclass(frozen=True)
class LatentCounts:
    """One draw of the regime split of every observed cell plus cell 000."""

    y111: tuple[int, ...]
    y000: tuple[int, ...]
    y110_1: int
    y011_1: int
    y100_1: int
    y101_1: int
    y010_1: int
    y001_1: int

    @property
    def two_cell(self) -> np.ndarray:
        return np.array([self.y110_1, self.y011_1, self.y100_1,
                         self.y101_1, self.y010_1, self.y001_1])


@dataclass
class LatentBatch:
    """K latent draws stored as arrays, one row per E-step sample."""

    y111: np.ndarray     # (K, 5)
    y000: np.ndarray     # (K, 5)
    two: np.ndarray      # (K, 6), independent share of each TWO_CELLS cell
    P: np.ndarray        # (K, 3)
    q000: np.ndarray | None = None  # (K, 5) split probabilities used for y000

    @property
    def K(self) -> int:
        return self.y111.shape[0]

    def __getitem__(self, i: int) -> tuple[LatentCounts, CaptureProbs]:
        lat = LatentCounts(tuple(int(v) for v in self.y111[i]), tuple(int(v) for v in self.y000[i]),
                           *(int(v) for v in self.two[i]))
        return lat, CaptureProbs(*self.P[i])


@dataclass
class BetaShapes:
    m: np.ndarray   # (..., 3) first shape per list
    n: np.ndarray   # (..., 3) second shape per list
    floored: bool = False

    def mean(self) -> np.ndarray:
        return self.m / (self.m + self.n)


@dataclass
class ThbmFit:
    n_hat: float
    alpha_hat: DependenceAlpha
    shapes: BetaShapes
    trace: np.ndarray           # columns: iteration, N, a1..a4, objective
    converged: bool
    K: int
    iterations: int
    window: int
    diagnostics: dict = field(default_factory=dict)

    TRACE_COLUMNS = ("iteration", "N", "a1", "a2", "a3", "a4", "objective")

    @property
    def alpha0_hat(self) -> float:
        return self.alpha_hat.a0

    def trace_csv(self) -> str:
        lines = [",".join(self.TRACE_COLUMNS)]
        for row in self.trace:
            lines.append(f"{int(row[0])},{int(row[1])}," + ",".join(f"{v:.10g}" for v in row[2:]))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# cell probabilities


def _regime_cell_terms(alpha: np.ndarray, P: np.ndarray) -> dict[str, np.ndarray]:
    """Unnormalised regime contributions to every cell.

    ``alpha`` has shape (..., 4) and ``P`` shape (..., 3); each returned array
    has a trailing regime axis in order (independent, 1, 2, 3, 4), with zeros
    where a regime cannot produce the cell.
    """
    alpha = np.asarray(alpha, dtype=float)
    P = np.asarray(P, dtype=float)
    a1, a2, a3, a4 = np.moveaxis(alpha, -1, 0)
    P1, P2, P3 = np.moveaxis(P, -1, 0)
    Q1, Q2, Q3 = 1 - P1, 1 - P2, 1 - P3
    b = 1 - (a1 + a2 + a3 + a4)
    z = np.zeros(np.broadcast(a1, P1).shape)
    st = lambda *xs: np.stack(np.broadcast_arrays(*xs), axis=-1)  # noqa: E731
    return {
        "111": st(b * P1 * P2 * P3, a1 * P1 * P3, a2 * P1 * P2, a3 * P1 * P2, a4 * P1),
        "110": st(b * P1 * P2 * Q3, a1 * P1 * Q3, z, z, z),
        "101": st(b * P1 * Q2 * P3, z, z, a3 * P1 * Q2, z),
        "011": st(b * Q1 * P2 * P3, z, a2 * Q1 * P2, z, z),
        "100": st(b * P1 * Q2 * Q3, z, a2 * P1 * Q2, z, z),
        "010": st(b * Q1 * P2 * Q3, z, z, a3 * Q1 * P2, z),
        "001": st(b * Q1 * Q2 * P3, a1 * Q1 * P3, z, z, z),
        "000": st(b * Q1 * Q2 * Q3, a1 * Q1 * Q3, a2 * Q1 * Q2, a3 * Q1 * Q2, a4 * Q1),
    }


def cell_probs_array(alpha, P) -> np.ndarray:
    """Vectorised cell probabilities, shape (..., 8) in canonical order."""
    terms = _regime_cell_terms(alpha, P)
    order = ("111", "110", "101", "011", "100", "010", "001", "000")
    return np.stack([terms[c].sum(-1) for c in order], axis=-1)


def thbm_cell_probs(alpha: DependenceAlpha, p: CaptureProbs) -> CellProbabilities:
    probs = cell_probs_array(alpha.as_array(), p.as_array())
    return CellProbabilities(tuple(float(v) for v in probs))


# ---------------------------------------------------------------------------
# E-step samplers


def two_cell_fractions(alpha, P) -> np.ndarray:
    """Probability that an individual in each TWO_CELLS cell is independent.

    Shape (..., 6). These are the normalised two-component splits, e.g. for
    cell 110: ``(1-a0) P2 / ((1-a0) P2 + a1)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    P = np.asarray(P, dtype=float)
    b = (1 - alpha.sum(-1))[..., None]
    P2 = P[..., 1:2]
    P3 = P[..., 2:3]
    ind = b * np.concatenate([P2, P3, 1 - P3, P3, 1 - P3, 1 - P2], axis=-1)
    dep = alpha[..., [0, 1, 1, 2, 2, 0]]
    tot = ind + dep
    ind = np.broadcast_to(ind, tot.shape)
    return np.divide(ind, tot, out=np.ones(tot.shape), where=tot > 0)


def _normalise_rows(t: np.ndarray) -> np.ndarray:
    tot = t.sum(-1, keepdims=True)
    out = np.divide(t, tot, out=np.zeros(t.shape), where=tot > 0)
    if not np.all(tot > 0):
        # a row with no mass anywhere falls back to independence
        out[..., 0] = np.where(tot[..., 0] > 0, out[..., 0], 1.0)
    return out


def latent_split_probs(alpha, P) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Conditional split probabilities of cells 111 and 000 plus the binomial fractions."""
    alpha = np.asarray(alpha, dtype=float)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    K = P.shape[0]
    P2, P3 = P[:, 1], P[:, 2]
    w = np.concatenate([[1 - alpha.sum()], alpha])
    # the common factors P1 (cell 111) and 1 - P1 (cell 000) cancel
    t111 = np.ones((K, 5))
    t111[:, 0] = P2 * P3
    t111[:, 1] = P3
    t111[:, 2] = P2
    t111[:, 3] = P2
    t111 *= w
    t000 = np.ones((K, 5))
    t000[:, 0] = (1 - P2) * (1 - P3)
    t000[:, 1] = 1 - P3
    t000[:, 2] = 1 - P2
    t000[:, 3] = t000[:, 2]
    t000 *= w
    return _normalise_rows(t111), _normalise_rows(t000), two_cell_fractions(alpha, P)


def multinomial_rows(n, probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One multinomial draw per row of ``probs`` via the conditional-binomial chain.

    Exact, and much faster than ``Generator.multinomial`` with per-row
    probability vectors.
    """
    probs = np.asarray(probs, dtype=float)
    K, m = probs.shape
    out = np.empty((K, m), dtype=np.int64)
    left = np.full(K, n, dtype=np.int64) if np.ndim(n) == 0 else np.array(n, dtype=np.int64)
    tail = probs[:, ::-1].cumsum(1)[:, ::-1]   # mass of components u..m-1
    p = np.empty(K)
    for u in range(m - 1):
        p.fill(0.0)
        np.divide(probs[:, u], tail[:, u], out=p, where=tail[:, u] > 0)
        np.minimum(p, 1.0, out=p)
        out[:, u] = rng.binomial(left, p)
        left -= out[:, u]
    out[:, m - 1] = left
    return out


def _two_counts(table: TrsTable) -> np.ndarray:
    return np.array([table.x110, table.x011, table.x100, table.x101, table.x010, table.x001],
                    dtype=np.int64)


def sample_latent_batch(table: TrsTable, N: int, alpha, P: np.ndarray,
                        rng: np.random.Generator) -> LatentBatch:
    """Draw K latent splits at once, one per row of ``P`` (shape (K, 3))."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    x0 = table.x0
    if N < x0:
        raise ValueError(f"N = {N} is below the observed count {x0}")
    q111, q000, qtwo = latent_split_probs(alpha, P)
    y111 = multinomial_rows(table.x111, q111, rng)
    y000 = multinomial_rows(int(N) - x0, q000, rng)
    two = rng.binomial(_two_counts(table), np.minimum(qtwo, 1.0))
    return LatentBatch(y111, y000, two, P, q000)


def sample_latent(table: TrsTable, N: int, alpha: DependenceAlpha, p: CaptureProbs,
                  rng: np.random.Generator) -> LatentCounts:
    batch = sample_latent_batch(table, N, alpha.as_array(), p.as_array()[None, :], rng)
    return batch[0][0]


def expected_latent_batch(table: TrsTable, N: float, alpha, P) -> LatentBatch:
    """Conditional expectations of the latent split (real-valued); used to seed the fit."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q111, q000, qtwo = latent_split_probs(alpha, P)
    return LatentBatch(table.x111 * q111, (N - table.x0) * q000, _two_counts(table) * qtwo, P, q000)


def beta_shapes(table: TrsTable, N: float, latent: LatentBatch | LatentCounts,
                floor: float = SHAPE_FLOOR) -> BetaShapes:
    """Moment-matched beta shapes for the three capture probabilities."""
    single = isinstance(latent, LatentCounts)
    if single:
        y111 = np.asarray(latent.y111, dtype=float)[None]
        y000 = np.asarray(latent.y000, dtype=float)[None]
        two = latent.two_cell[None].astype(float)
    else:
        y111, y000, two = latent.y111, latent.y000, latent.two
    # two-cell columns: 110, 011, 100, 101, 010, 001
    K = y111.shape[0]
    x1 = table.n1
    m = np.empty((K, 3))
    n = np.empty((K, 3))
    m[:, 0] = x1
    n[:, 0] = N - x1
    m[:, 1] = y111[:, 0] + y111[:, 2] + y111[:, 3] + two[:, 0] + (table.x011 + table.x010)
    n[:, 1] = y000[:, 0] + y000[:, 2] + y000[:, 3] + two[:, 5] + (table.x100 + table.x101)
    m[:, 2] = y111[:, 0] + y111[:, 1] + two[:, 1] + two[:, 3] + table.x001
    n[:, 2] = y000[:, 0] + y000[:, 1] + two[:, 2] + two[:, 4] + table.x110
    floored = bool(m.min() < floor or n.min() < floor)
    if floored:
        np.maximum(m, floor, out=m)
        np.maximum(n, floor, out=n)
    if single:
        m, n = m[0], n[0]
    return BetaShapes(m, n, floored)


def sample_capture_probs_batch(shapes: BetaShapes, rng: np.random.Generator,
                               pcond: str = "plugin") -> np.ndarray:
    if pcond == "plugin":
        a, b = shapes.m, shapes.n
    elif pcond == "posterior":
        a, b = 2 * shapes.m, 2 * shapes.n
    else:
        raise ValueError(f"pcond must be 'plugin' or 'posterior', got {pcond!r}")
    P = rng.beta(a, b)
    np.maximum(P, _P_EPS, out=P)
    np.minimum(P, 1 - _P_EPS, out=P)
    return P


def sample_capture_probs(table: TrsTable, N: int, latent: LatentCounts,
                         rng: np.random.Generator, pcond: str = "plugin") -> CaptureProbs:
    shapes = beta_shapes(table, N, latent)
    return CaptureProbs(*sample_capture_probs_batch(shapes, rng, pcond))


# ---------------------------------------------------------------------------
# M-step


def observed_regime_counts(table: TrsTable, batch: LatentBatch) -> np.ndarray:
    """Per-sample regime totals over the seven observed cells, shape (K, 5)."""
    return _regime_totals_from(table, batch.y111, batch.two)


def _regime_totals_from(table: TrsTable, y111: np.ndarray, two: np.ndarray) -> np.ndarray:
    # works for (K, .) arrays and for their column means alike
    y111 = np.asarray(y111, dtype=float)
    two = np.asarray(two, dtype=float)
    dep = _two_counts(table) - two
    out = np.empty(y111.shape[:-1] + (5,))
    out[..., 0] = y111[..., 0] + two.sum(-1)
    out[..., 1] = y111[..., 1] + dep[..., 0] + dep[..., 5]
    out[..., 2] = y111[..., 2] + dep[..., 1] + dep[..., 2]
    out[..., 3] = y111[..., 3] + dep[..., 3] + dep[..., 4]
    out[..., 4] = y111[..., 4]
    return out


def _xlogx_over(c: np.ndarray, N: np.ndarray) -> np.ndarray:
    return xlogy(c, np.where(c > 0, c, 1.0) / N)


@dataclass
class MStepObjective:
    """Monte-Carlo M-step objective as a function of integer N.

    ``mode="expected"`` treats the size of the unobserved cell as the
    parameter and its regime composition through the conditional split
    probabilities at the sampled capture probabilities. ``mode="latent"``
    keeps the sampled counts of cell 000 fixed outside regime 4 and lets only
    the regime-4 share absorb changes in N, which forces
    ``N >= x0 + max_i S_i``.
    """

    table: TrsTable
    obs: np.ndarray                 # (5,) mean observed regime counts
    mode: str
    lower: int
    # expected mode
    w000: np.ndarray | None = None  # (5,) mean composition of cell 000
    cross: float = 0.0              # mean_i sum_u w_iu log(pi_iu / w_iu)
    # latent mode
    S: np.ndarray | None = None     # (K,) dependent-regime part of cell 000
    y000_mean: np.ndarray | None = None
    log1mP1: np.ndarray | None = None

    @classmethod
    def build(cls, table: TrsTable, batch: LatentBatch, alpha_prev, mode: str = "expected"):
        obs = _regime_totals_from(table, batch.y111.mean(0), batch.two.mean(0))
        x0 = table.x0
        if mode == "expected":
            P = batch.P
            w = batch.q000
            if w is None:
                w = latent_split_probs(alpha_prev, P)[1]
            L = np.log1p(-P)
            logpi = np.empty_like(w)
            logpi[:, 0] = L.sum(1)
            logpi[:, 1] = L[:, 0] + L[:, 2]
            logpi[:, 2] = L[:, 0] + L[:, 1]
            logpi[:, 3] = logpi[:, 2]
            logpi[:, 4] = L[:, 0]
            cross = float(np.mean(np.sum(w * logpi - xlogy(w, w), axis=1)))
            return cls(table, obs, mode, x0, w000=w.mean(0), cross=cross)
        if mode == "latent":
            y000 = batch.y000.astype(float)
            # everything in cell 000 except the regime-4 share
            S = y000[:, :4].sum(1)
            return cls(table, obs, mode, int(x0 + S.max()), S=S,
                       y000_mean=y000.mean(0), log1mP1=np.log1p(-batch.P[:, 0]))
        raise ValueError(f"unknown M-step mode {mode!r}")

    def regime_totals(self, N: np.ndarray) -> np.ndarray:
        """Mean regime totals C_s(N), shape (len(N), 5); rows sum to N."""
        N = np.asarray(N, dtype=float)
        extra = N - self.table.x0
        if self.mode == "expected":
            return self.obs[None, :] + extra[:, None] * self.w000[None, :]
        C = np.empty((N.size, 5))
        C[:, :4] = self.obs[None, :4] + self.y000_mean[None, :4]
        C[:, 4] = self.obs[4] + extra - self.S.mean()
        return C

    def alpha_at(self, N: int) -> np.ndarray:
        C = self.regime_totals(np.array([N]))[0]
        return C[1:] / N

    def __call__(self, N) -> np.ndarray:
        N = np.atleast_1d(np.asarray(N, dtype=float))
        x0 = self.table.x0
        C = self.regime_totals(N)
        alpha_part = _xlogx_over(C, N[:, None]).sum(1)
        if self.mode == "expected":
            return gammaln(N + 1) - gammaln(N - x0 + 1) + (N - x0) * self.cross + alpha_part
        M = N[:, None] - x0 - self.S[None, :]
        val = (gammaln(N + 1) - gammaln(N - x0 + 1)
               + np.mean(-gammaln(M + 1) + M * self.log1mP1[None, :], axis=1))
        # the alpha_4 part of (N - x0 - S) log(alpha_4 (1 - P1)) lives in alpha_part
        return val + alpha_part


def maximise_integer(objective, start: int, lower: int, width: int | None = None,
                     upper: int | None = None) -> tuple[int, float]:
    """Maximise ``objective`` over integers >= lower.

    The bracket around ``start`` expands geometrically until the maximiser is
    interior, then the final bracket is scanned exhaustively. Ties go to the
    smaller N.
    """
    start = max(int(start), lower)
    w = max(5, start // 50) if width is None else max(1, width)
    lo, hi = max(lower, start - w), start + w
    cap = upper if upper is not None else max(100 * start, lower + 10_000)
    while True:
        grid = np.arange(lo, hi + 1)
        vals = objective(grid)
        vals = np.where(np.isfinite(vals), vals, -np.inf)
        j = int(np.argmax(vals))
        if j == grid.size - 1 and hi < cap:
            lo, hi, w = hi - 1, min(hi + 2 * w, cap), 2 * w
            continue
        if j == 0 and lo > lower:
            lo, hi, w = max(lower, lo - 2 * w), lo + 1, 2 * w
            continue
        return int(grid[j]), float(vals[j])


def mstep(table: TrsTable, batch: LatentBatch, N_current: int, alpha_prev=None,
          mode: str = "expected") -> tuple[int, np.ndarray, float, MStepObjective]:
    """One M-step: integer N maximising the MC objective and its closed-form alpha."""
    if alpha_prev is None:
        alpha_prev = np.full(4, 0.1)
    obj = MStepObjective.build(table, batch, alpha_prev, mode)
    N_star, val = maximise_integer(obj, max(N_current, obj.lower), obj.lower)
    return N_star, obj.alpha_at(N_star), val, obj


# ---------------------------------------------------------------------------
# fitting loop


def initial_population(table: TrsTable) -> int:
    x = table
    den = x.x101 * x.x011 * x.x110
    if den == 0:
        return 2 * x.x0
    return int(round(x.x0 + x.x111 * x.x001 * x.x100 * x.x010 / den))


def fit_thbm(table: TrsTable, K: int = 1000, max_iter: int = 500, tol: float = 1e-3,
             seed: int = 0, pcond: str = "plugin", mode: str = "expected",
             window: int = 5, alpha_init: Sequence[float] = (0.1, 0.1, 0.1, 0.1),
             N_init: int | None = None,
             rng: np.random.Generator | None = None) -> ThbmFit:
    """Fit the THBM by Monte-Carlo EM and return the full trace.

    The default start is the saturated log-linear fill of cell 000 (twice
    ``x0`` when that is undefined) with every mixture weight at 0.1.
    ``N_init`` and ``alpha_init`` override it, e.g. to warm-start bootstrap
    replicates from the fit on the original table.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    rng = make_rng(seed) if rng is None else rng
    x0 = table.x0
    N = max(initial_population(table) if N_init is None else int(round(N_init)), x0)
    alpha = np.asarray(alpha_init, dtype=float)
    if alpha.shape != (4,) or np.any(alpha < 0) or alpha.sum() >= 1:
        raise ValueError(f"invalid starting mixture weights {alpha_init!r}")
    P0 = np.clip(np.array(table.margins, dtype=float) / N, _P_EPS, 1 - _P_EPS)
    batch = expected_latent_batch(table, N, alpha, P0[None, :])

    rows = []
    floored = False
    boundary_hits = 0
    converged = False
    for t in range(1, max_iter + 1):
        shapes = beta_shapes(table, N, batch)
        floored |= shapes.floored
        if shapes.m.shape[0] != K:
            shapes = BetaShapes(np.repeat(shapes.m, K, 0), np.repeat(shapes.n, K, 0))
        P = sample_capture_probs_batch(shapes, rng, pcond)
        batch = sample_latent_batch(table, N, alpha, P, rng)
        N, alpha, val, obj = mstep(table, batch, N, alpha, mode)
        boundary_hits += int(N == obj.lower and mode == "latent")
        rows.append((t, N, *alpha, val))
        if t >= 2 * window and _window_converged(rows, window, tol, x0):
            converged = True
            break

    trace = np.array(rows, dtype=float)
    tail = trace[-window:]
    n_hat = float(tail[:, 1].mean())
    alpha_hat = DependenceAlpha.from_sequence(np.clip(tail[:, 2:6].mean(0), 0.0, 1.0))
    final_shapes = beta_shapes(table, N, batch)
    shapes_mean = BetaShapes(final_shapes.m.mean(0), final_shapes.n.mean(0), floored)
    diagnostics = {
        "iterations": len(rows),
        "converged": converged,
        "K": K,
        "pcond": pcond,
        "mode": mode,
        "alpha": alpha_hat.as_array().tolist(),
        "alpha0": alpha_hat.a0,
        "shape_floor_triggered": floored,
        "objective_drops": _objective_drops(trace[:, 6]),
    }
    if mode == "latent":
        diagnostics["boundary_iterations"] = boundary_hits
    return ThbmFit(n_hat, alpha_hat, shapes_mean, trace, converged, K, len(rows), window, diagnostics)


def _window_converged(rows, window: int, tol: float, x0: int) -> bool:
    arr = np.asarray(rows[-2 * window:], dtype=float)
    prev, cur = arr[:window], arr[window:]
    dN = abs(cur[:, 1].mean() - prev[:, 1].mean())
    dA = np.max(np.abs(cur[:, 2:6].mean(0) - prev[:, 2:6].mean(0)))
    return dN < tol * x0 and dA < tol


def _objective_drops(obj: np.ndarray, window: int = 5) -> int:
    """Count window-average drops larger than three standard errors of the window."""
    if obj.size < 2 * window:
        return 0
    win = np.lib.stride_tricks.sliding_window_view(obj, window)
    mean = win.mean(1)
    var = win.var(1, ddof=1)
    prev_m, cur_m = mean[:-window], mean[window:]
    se = np.sqrt((var[:-window] + var[window:]) / window)
    return int(np.sum((se > 0) & (cur_m < prev_m - 3 * se)))


# ---------------------------------------------------------------------------
# likelihood evaluation and quadrature oracle


def log_likelihood_fixed(table: TrsTable, N: int, alpha, P) -> np.ndarray:
    """Multinomial log-likelihood at fixed capture probabilities, full constants included."""
    counts = table.counts.astype(float)
    x0 = table.x0
    probs = cell_probs_array(np.asarray(alpha, dtype=float), np.asarray(P, dtype=float))
    obs = probs[..., :7]
    p000 = probs[..., 7]
    const = gammaln(N + 1) - gammaln(counts + 1).sum() - gammaln(N - x0 + 1)
    with np.errstate(divide="ignore"):
        return const + xlogy(counts, obs).sum(-1) + xlogy(N - x0, p000)


def mc_marginal_likelihood(table: TrsTable, N: int, alpha, shapes: BetaShapes,
                           n_draws: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo estimate of the beta-mixed likelihood and its standard error.

    Each draw of P gives the fixed-P likelihood, which is exactly the sum of
    the complete-data likelihood over all latent regime splits.
    """
    P = np.clip(rng.beta(shapes.m, shapes.n, size=(n_draws, 3)), _P_EPS, 1 - _P_EPS)
    vals = np.exp(log_likelihood_fixed(table, N, alpha, P))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_draws))


def _beta_rule(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi nodes in (0, 1) and weights summing to one for Beta(a, b).

    Built by Golub-Welsch from the Jacobi recurrence so the weights stay
    finite for very large shapes. The fixed-P likelihood is a polynomial of
    degree at most N in each P, so ``n > N / 2`` nodes integrate it exactly.
    """
    al, be = b - 1.0, a - 1.0
    k = np.arange(n, dtype=float)
    s = 2 * k + al + be
    with np.errstate(divide="ignore", invalid="ignore"):
        diag = np.where(k == 0, (be - al) / (al + be + 2), (be * be - al * al) / (s * (s + 2)))
    kk, ss = k[1:], s[1:]
    off = (2.0 / ss * np.sqrt((kk + al) * (kk + be) / (ss + 1))
           * np.where(kk == 1, 1.0, np.sqrt(kk * (kk + al + be) / np.maximum(ss - 1, 1e-300))))
    x, V = eigh_tridiagonal(diag, off)
    return (1 + x) / 2, V[0] ** 2


def marginal_loglik_oracle(table: TrsTable, N: int, alpha, shapes: BetaShapes,
                           resolution: int = 64, check: bool = False,
                           rtol: float = 1e-6) -> float:
    """Log of the beta-mixed likelihood by tensor-product Gauss quadrature.

    Intended for small tables only. With ``check=True`` the value is also
    computed at twice the resolution and :class:`GridTooCoarse` is raised when
    the two differ by more than ``rtol`` relative.
    """
    if resolution < 2:
        raise GridTooCoarse("resolution must be at least 2")

    def integrate(n):
        rules = [_beta_rule(float(shapes.m[l]), float(shapes.n[l]), n) for l in range(3)]
        p1, w1 = rules[0]
        p2, w2 = rules[1]
        p3, w3 = rules[2]
        P23 = np.stack(np.meshgrid(p2, p3, indexing="ij"), axis=-1)
        with np.errstate(divide="ignore"):
            logw23 = np.log(w2)[:, None] + np.log(w3)[None, :]
            logw1 = np.log(w1)
        # one P1 node at a time keeps memory at O(n^2)
        logs = np.empty(p1.size)
        for i, a in enumerate(p1):
            P = np.concatenate([np.full(P23.shape[:-1] + (1,), a), P23], axis=-1)
            logs[i] = logw1[i] + logsumexp(log_likelihood_fixed(table, N, alpha, P) + logw23)
        return float(logsumexp(logs))

    val = integrate(resolution)
    if check:
        fine = integrate(2 * resolution)
        if abs(math.expm1(fine - val)) > rtol:
            raise GridTooCoarse(f"quadrature changed by {abs(math.expm1(fine - val)):.3g} on refinement")
        return fine
    return val
