"""Rank and correlation statistics used by the reporting pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import ValidationError

EXACT_ENUMERATION_LIMIT = 16


@dataclass(frozen=True)
class MannWhitneyResult:
    u_statistic: float
    p_two_sided: float
    method: str  # "exact" or "normal_approx"


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient of two equal-length series."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("pearson: inputs must be 1-D series of equal length")
    if x.size < 2:
        raise ValidationError("pearson: need at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.dot(dx, dx)
    sy = np.dot(dy, dy)
    if sx == 0.0 or sy == 0.0:
        raise ValidationError("pearson: zero-variance input")
    r = float(np.dot(dx, dy) / math.sqrt(sx * sy))
    return max(-1.0, min(1.0, r))


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their covered ranks."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(a, b) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test.

    The U statistic is reported for the first sample, computed from rank
    sums with midranks for ties. When n + m <= 16 and no ties are present,
    the two-sided p-value is exact (full enumeration of rank assignments);
    otherwise a normal approximation with tie and continuity corrections
    is used. p is capped at 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValidationError("mann_whitney_u: both samples must be non-empty")
    n, m = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u1 = float(ranks[:n].sum()) - n * (n + 1) / 2.0

    has_ties = np.unique(pooled).size < pooled.size
    if n + m <= EXACT_ENUMERATION_LIMIT and not has_ties:
        total = math.comb(n + m, n)
        all_ranks = range(1, n + m + 1)
        count_le = 0
        count_ge = 0
        offset = n * (n + 1) / 2.0
        for chosen in combinations(all_ranks, n):
            u = sum(chosen) - offset
            if u <= u1:
                count_le += 1
            if u >= u1:
                count_ge += 1
        p = 2.0 * min(count_le, count_ge) / total
        return MannWhitneyResult(u1, min(1.0, p), "exact")

    mean_u = n * m / 2.0
    # tie-corrected variance of U
    _, tie_counts = np.unique(pooled, return_counts=True)
    big_n = n + m
    tie_term = float(((tie_counts ** 3 - tie_counts).sum())) / (big_n * (big_n - 1.0))
    var_u = n * m / 12.0 * ((big_n + 1.0) - tie_term)
    if var_u <= 0.0:
        return MannWhitneyResult(u1, 1.0, "normal_approx")
    # continuity correction toward the mean
    diff = u1 - mean_u
    if diff > 0:
        diff -= 0.5
    elif diff < 0:
        diff += 0.5
    z = diff / math.sqrt(var_u)
    p = 2.0 * _norm_sf(abs(z))
    return MannWhitneyResult(u1, min(1.0, p), "normal_approx")


def linear_fit(x, y):
    """Ordinary least squares line fit.

    Returns (slope, intercept, r_squared). r_squared is defined as
    1 - SS_res/SS_tot, and as 1.0 when both sums vanish (an exact fit to
    a constant series).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValidationError("linear_fit: need two equal-length series with >= 2 points")
    dx = x - x.mean()
    sxx = np.dot(dx, dx)
    if sxx == 0.0:
        raise ValidationError("linear_fit: x values are all equal")
    dy = y - y.mean()
    slope = float(np.dot(dx, dy) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    residuals = y - (slope * x + intercept)
    ss_res = float(np.dot(residuals, residuals))
    ss_tot = float(np.dot(dy, dy))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-300 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return slope, intercept, r2
