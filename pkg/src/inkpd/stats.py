"""Mann-Whitney U screening of features (PD vs HC)."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from inkpd.features import FeatureMatrix

EXACT_MAX_N = 12
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class RankSumResult:
    u_statistic: float  # min(U1, U2)
    u1: float
    z_score: float
    p_value: float
    n1: int
    n2: int
    method: str  # "exact" | "normal"


def _u_counts_tie_free(n1: int, n2: int) -> np.ndarray:
    """Number of arrangements giving each U in 0..n1*n2 (no ties)."""
    # f[m][n] as arrays over u; f(u; m, n) = f(u - n; m - 1, n) + f(u; m, n - 1)
    f = [[None] * (n2 + 1) for _ in range(n1 + 1)]
    for m in range(n1 + 1):
        for n in range(n2 + 1):
            size = m * n + 1
            if m == 0 or n == 0:
                arr = np.zeros(size)
                arr[0] = 1.0
            else:
                arr = np.zeros(size)
                a = f[m - 1][n]
                arr[n:n + a.size] += a
                b = f[m][n - 1]
                arr[:b.size] += b
            f[m][n] = arr
    return f[n1][n2]


def _exact_p(ranks: np.ndarray, n1: int, u1: float, ties: bool) -> float:
    n = ranks.size
    n2 = n - n1
    if not ties:
        counts = _u_counts_tie_free(n1, n2)
        u = np.arange(counts.size, dtype=np.float64)
    else:
        sums = np.array([ranks[list(c)].sum() for c in itertools.combinations(range(n), n1)])
        u, counts = np.unique(sums - n1 * (n1 + 1) / 2.0, return_counts=True)
        counts = counts.astype(np.float64)
    total = counts.sum()
    eps = 1e-9
    lower = counts[u <= u1 + eps].sum() / total
    upper = counts[u >= u1 - eps].sum() / total
    return float(min(1.0, 2.0 * min(lower, upper)))


def mann_whitney_u(a, b, exact_max_n: int = EXACT_MAX_N) -> RankSumResult:
    """Two-sided Mann-Whitney U test with midranks.

    Exact permutation p when ``len(a) + len(b) <= exact_max_n``; otherwise a
    normal approximation with tie-corrected variance and 0.5 continuity
    correction.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate((a, b))
    ranks = rankdata(pooled)
    n = n1 + n2
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    u2 = n1 * n2 - u1
    mu = n1 * n2 / 2.0
    _, tie_sizes = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_sizes ** 3 - tie_sizes))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    sd = math.sqrt(var) if var > 0 else 0.0
    if sd > 0:
        dev = u1 - mu
        z = math.copysign(max(abs(dev) - 0.5, 0.0), dev) / sd
    else:
        z = 0.0
    if n <= exact_max_n:
        p = 1.0 if sd == 0 else _exact_p(ranks, n1, u1, bool(tie_term))
        method = "exact"
    else:
        p = 1.0 if sd == 0 else min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
        method = "normal"
    return RankSumResult(min(u1, u2), u1, z, p, n1, n2, method)


@dataclass
class FilterResult:
    selected: List[str]
    results: Dict[str, RankSumResult]
    alpha: float

    @property
    def pass_count(self) -> int:
        return len(self.selected)


def filter_features(m: FeatureMatrix, alpha: float = DEFAULT_ALPHA, rows: Sequence[int] | None = None) -> FilterResult:
    """Keep features with ``p < alpha``.

    ``rows`` restricts the test to a subset of subjects (leak-free mode passes
    the training split); by default every row is used.
    """
    y = m.y if rows is None else m.y[list(rows)]
    X = m.values if rows is None else m.values[list(rows)]
    pos, neg = y > 0, y < 0
    if not pos.any() or not neg.any():
        raise ValueError("Mann-Whitney filter needs both PD and HC subjects")
    results = {}
    selected = []
    for j, key in enumerate(m.feature_ids):
        r = mann_whitney_u(X[pos, j], X[neg, j])
        results[key] = r
        if r.p_value < alpha:
            selected.append(key)
    return FilterResult(selected, results, alpha)


def format_pass_counts(counts: Mapping[int, Mapping[str, int]], groups: Sequence[str]) -> str:
    """Task x group pass-count grid as tab-separated text."""
    lines = ["task\t" + "\t".join(groups)]
    for task in sorted(counts):
        lines.append(f"{task}\t" + "\t".join(str(counts[task].get(g, "")) for g in groups))
    return "\n".join(lines) + "\n"
