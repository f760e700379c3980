"""Wilcoxon signed-rank test for paired samples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

EXACT_MAX_N = 25
MIN_NONZERO = 5


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    pvalue: float
    n: int  # non-zero differences used
    method: str  # "exact" or "approx"

    def __iter__(self):
        return iter((self.statistic, self.pvalue))


def _exact_cdf_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Null counts of the doubled positive-rank sum, indexed by value.

    Each rank enters the sum with an independent fair sign, so the counts
    follow from a subset-sum convolution over the (integer, doubled) ranks.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks.tolist():
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(a, b=None, method: str = "auto") -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test of ``a - b`` (or of ``a`` alone).

    Zero differences are dropped. With at most 25 remaining pairs the
    p-value is exact (tied ranks included); above that, the normal
    approximation with tie and continuity corrections is used.

    Raises
    ------
    ValueError
        If fewer than 5 non-zero differences remain.
    """
    a = np.asarray(a, dtype=np.float64)
    d = a if b is None else a - np.asarray(b, dtype=np.float64)
    if b is not None and a.shape != np.shape(b):
        raise ValueError("paired samples must have equal lengths")
    d = d[d != 0]
    n = d.size
    if n < MIN_NONZERO:
        raise ValueError(f"need at least {MIN_NONZERO} non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2.0
    w_minus = total - w_plus
    stat = min(w_plus, w_minus)

    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "approx"
    if method == "exact":
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _exact_cdf_counts(doubled)
        k = int(round(2 * stat))
        tail = sum(counts[:k + 1])
        p = min(1.0, 2.0 * float(tail) / float(2 ** n))
    elif method == "approx":
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
        z = (abs(w_plus - total / 2.0) - 0.5) / math.sqrt(var) if var > 0 else 0.0
        p = min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2.0)))
    else:
        raise ValueError("method must be 'auto', 'exact' or 'approx'")
    return WilcoxonResult(stat, p, n, method)
