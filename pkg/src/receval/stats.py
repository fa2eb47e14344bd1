"""Paired comparison of per-dataset errors between two methods."""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import ContractError

EXACT_MAX_N = 25


@dataclass(frozen=True)
class Comparison:
    test: str
    statistic: float
    p_value: float
    n: int
    exact: bool
    mean_difference: float

    def to_dict(self):
        return dict(self.__dict__)


def signed_ranks(diff):
    """Midranks of |diff| (zeros removed) and their signs."""
    d = np.asarray(diff, float)
    d = d[d != 0]
    ranks = sps.rankdata(np.abs(d))
    return ranks, np.sign(d)


def signed_rank_null(ranks) -> dict:
    """Exact null distribution of W+ as {2*W+: number of sign assignments}.

    Works on doubled ranks so tied midranks stay integral.
    """
    r2 = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return {k: int(counts[k]) for k in range(total + 1) if counts[k]}


def wilcoxon_signed_rank(a, b):
    """Two-sided paired signed-rank test; returns (W+, p, exact)."""
    diff = np.asarray(a, float) - np.asarray(b, float)
    ranks, signs = signed_ranks(diff)
    n = len(ranks)
    if n == 0:
        return 0.0, 1.0, True
    w_plus = float(ranks[signs > 0].sum())
    if n <= EXACT_MAX_N:
        null = signed_rank_null(ranks)
        k = int(round(2 * w_plus))
        lower = sum(c for v, c in null.items() if v <= k)
        upper = sum(c for v, c in null.items() if v >= k)
        p = Fraction(2 * min(lower, upper), 2 ** n)
        return w_plus, float(min(p, 1)), True
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = (abs(w_plus - mu) - 0.5) / math.sqrt(var)
    return w_plus, float(min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2)))), False


def compare_methods(errors_a, errors_b, test: str = "wilcoxon") -> Comparison:
    """Paired two-sided test on per-dataset mean errors of two methods.

    ``test`` is ``"wilcoxon"`` (default; exact for n <= 25) or ``"t"``.
    All-zero differences give p = 1.
    """
    a = np.asarray(errors_a, float)
    b = np.asarray(errors_b, float)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError("paired comparison needs two equal-length 1-D lists")
    if test == "wilcoxon" and len(a) < 5:
        raise ContractError("the signed-rank comparison needs n >= 5 pairs")
    mean_diff = float(np.mean(a - b)) if len(a) else 0.0
    if np.all(a == b):
        return Comparison(test, 0.0, 1.0, len(a), True, mean_diff)
    if test == "wilcoxon":
        w, p, exact = wilcoxon_signed_rank(a, b)
        return Comparison(test, w, p, len(a), exact, mean_diff)
    if test == "t":
        if len(a) < 2:
            raise ContractError("paired t-test needs n >= 2")
        r = sps.ttest_rel(a, b)
        p = 0.0 if np.isnan(r.pvalue) else float(r.pvalue)
        return Comparison(test, float(r.statistic), p, len(a), False, mean_diff)
    raise ContractError(f"unknown test {test!r}")
