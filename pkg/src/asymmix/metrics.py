"""Overlap and significance statistics: Dice and the Wilcoxon signed-rank test."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from ._validation import check_same_shape
from .exceptions import ContractViolation

EXACT_MAX_N = 25


@dataclass(frozen=True)
class DiceStats:
    tp: int
    fp: int
    fn: int
    score: float


def dice(pred, gt):
    """Dice overlap ``2 TP / (2 TP + FP + FN)`` between two binary masks.

    Two empty masks score 1.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    check_same_shape(pred, gt, "masks")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    denom = 2 * tp + fp + fn
    return DiceStats(tp, fp, fn, 1.0 if denom == 0 else 2.0 * tp / denom)


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+, the rank sum of positive differences
    n_effective: int
    p_value: float
    method: str  # "exact" or "normal-approx"


def _exact_null_counts(doubled_ranks):
    """Number of sign patterns giving each value of 2*W+.

    Same distribution as enumerating all 2**n sign assignments, built up one
    rank at a time.
    """
    counts = np.zeros(int(doubled_ranks.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    reach = 0
    for r in doubled_ranks:
        r = int(r)
        counts[r: reach + r + 1] += counts[: reach + 1].copy()
        reach += r
    return counts


def wilcoxon_signed_rank(a, b):
    """Two-sided paired Wilcoxon signed-rank test on ``a - b``.

    Zero differences are dropped; tied magnitudes share their average rank.
    For at most 25 non-zero differences the p-value comes from the exact null
    distribution, ``min(1, 2 * min(P(W <= w), P(W >= w)))``; above that a
    normal approximation with tie-corrected variance and continuity
    correction is used.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size or a.size == 0:
        raise ContractViolation("paired samples must be non-empty and of equal length")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 0, 1.0, "exact")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _exact_null_counts(doubled)
        total = float(2**n)
        w2 = int(round(2 * w_plus))
        lower = counts[: w2 + 1].sum() / total
        upper = counts[w2:].sum() / total
        p = min(1.0, 2.0 * min(lower, upper))
        return WilcoxonResult(w_plus, n, p, "exact")
    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes**3 - tie_sizes) / 48.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / np.sqrt(var)
    p = min(1.0, max(2.0 * norm.sf(z), np.finfo(np.float64).tiny))
    return WilcoxonResult(w_plus, n, p, "normal-approx")
