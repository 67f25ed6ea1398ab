"""Sample-coverage estimator for three lists."""

from __future__ import annotations

import math

from .exceptions import ZeroMargin
from .table import EstimateResult, TrsTable

LOW_COVERAGE = 0.55


def sample_coverage(table: TrsTable) -> float:
    n1, n2, n3 = table.margins
    if min(n1, n2, n3) == 0:
        raise ZeroMargin(f"list margins must be positive, got {(n1, n2, n3)}")
    return 1.0 - (table.x100 / n1 + table.x010 / n2 + table.x001 / n3) / 3.0


def estimate_sc(table: TrsTable) -> EstimateResult:
    """Coverage-adjusted estimate; infeasible values are flagged, never clamped."""
    x = table
    n1, n2, n3 = x.margins
    C = sample_coverage(x)
    pm = x.pair_margin
    D = pm(".11") + pm("1.1") + pm("11.")
    diag: dict = {"coverage": C, "warnings": []}
    if C < LOW_COVERAGE:
        diag["warnings"].append(f"sample coverage {C:.3f} below {LOW_COVERAGE}")
    if C <= 0:
        diag["degenerate"] = "coverage"
        return EstimateResult("SC", math.nan, x.x0, label=x.label, diagnostics=diag)

    remainder = ((pm("1.0") + pm(".10")) * pm("11.") / (n1 * n2)
                 + (pm("10.") + pm(".01")) * pm("1.1") / (n1 * n3)
                 + (pm("0.1") + pm("01.")) * pm(".11") / (n2 * n3)) / (3.0 * C)
    bracket = 1.0 - remainder
    diag["remainder"] = remainder
    if bracket <= 0:
        diag["degenerate"] = "bracket"
        return EstimateResult("SC", math.nan, x.x0, label=x.label, diagnostics=diag)
    n_hat = D / (3.0 * C) / bracket
    if n_hat < x.x0:
        diag["warnings"].append(f"estimate {n_hat:.2f} is below the observed count {x.x0}")
    return EstimateResult("SC", float(n_hat), x.x0, label=x.label, diagnostics=diag)
