"""SVM-ranking wrapper selection and the repeated hold-out protocol.

One repetition ``r`` uses seed ``base_seed + r`` for its stratified 80:20
split, its CV folds and the solver, so every number is reproducible from
``(config, base_seed)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from inkpd import svm
from inkpd.features import FeatureMatrix, impute_median
from inkpd.stats import filter_features
from inkpd.svm import COUNTERS, ConfusionCounts, GridSpec

logger = logging.getLogger(__name__)

DESCENDING = "descending"
RANDOM = "random"
PAPER = "paper"
CLEAN = "clean"


@dataclass(frozen=True)
class ProtocolConfig:
    repetitions: int = 50
    test_fraction: float = 0.2
    grid: GridSpec = field(default_factory=GridSpec)
    cv_tol: float = 1e-3  # SMO stopping gap inside the CV sweep
    fit_tol: float = svm.SMO_TOL  # SMO stopping gap for the refit on the training split
    alpha: float = 0.05
    leak_mode: str = PAPER
    max_curve_features: Optional[int] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.leak_mode not in (PAPER, CLEAN):
            raise ValueError(f"leak_mode must be {PAPER!r} or {CLEAN!r}")


@dataclass
class ProtocolResult:
    accuracies: np.ndarray  # percent, one per repetition
    confusion: ConfusionCounts  # pooled over repetitions

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        a = self.accuracies
        return float(a.std(ddof=1)) if a.size > 1 else 0.0

    @property
    def metrics(self) -> svm.Metrics:
        return svm.metrics(self.confusion)


class StratificationError(ValueError):
    pass


def stratified_split(y, test_fraction: float, seed) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded per-class shuffle, then ``round(test_fraction * n_class)`` to test."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        if idx.size < 2:
            raise StratificationError(f"class {cls:+g} has {idx.size} subject(s); cannot split")
        n_test = min(max(1, int(round(test_fraction * idx.size))), idx.size - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def _fit_and_test(X_tr, y_tr, X_te, y_te, config: ProtocolConfig, seed) -> Tuple[ConfusionCounts, np.ndarray]:
    g = svm.grid_search(X_tr, y_tr, config.grid, seed, tol=config.cv_tol)
    model = svm.train_smo(X_tr, y_tr, g.best_c, g.best_z, tol=config.fit_tol)
    pred = model.predict(X_te)
    return ConfusionCounts.from_labels(y_te, pred), pred


def evaluate_protocol(X, y, config: ProtocolConfig = ProtocolConfig(), base_seed: int = 0) -> ProtocolResult:
    """Repeated stratified hold-out: grid-searched CV on train, score on test."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    if np.unique(y).size < 2:
        raise StratificationError("protocol needs both classes")
    accs = np.empty(config.repetitions)
    pooled = ConfusionCounts()
    for r in range(config.repetitions):
        seed = base_seed + r
        tr, te = stratified_split(y, config.test_fraction, seed)
        COUNTERS["repetitions"] += 1
        COUNTERS["train_rows"] += tr.size
        COUNTERS["test_rows"] += te.size
        cc, _ = _fit_and_test(X[tr], y[tr], X[te], y[te], config, seed)
        accs[r] = svm.metrics(cc).accuracy
        pooled = pooled + cc
    return ProtocolResult(accs, pooled)


# ---------------------------------------------------------------------------
# ranking


@dataclass(frozen=True)
class RankedFeature:
    feature: str
    individual_accuracy: Optional[float]
    rank: int


@dataclass
class AccuracyCurve:
    points: List[Tuple[int, float, float]]  # (n, mean %, std %)
    order: str
    results: List[ProtocolResult] = field(default_factory=list, repr=False)

    @property
    def best_n(self) -> int:
        means = [p[1] for p in self.points]
        return self.points[int(np.argmax(means))][0]  # first max -> smallest n

    @property
    def best(self) -> Tuple[int, float, float]:
        return self.points[self.best_n - 1]

    def __len__(self):
        return len(self.points)


class ProtocolCache:
    """Memo of protocol results keyed by (feature tuple, seed)."""

    def __init__(self):
        self._store: Dict[Tuple[Tuple[str, ...], int], ProtocolResult] = {}

    def evaluate(self, m: FeatureMatrix, keys: Sequence[str], config: ProtocolConfig, seed: int) -> ProtocolResult:
        k = (tuple(keys), seed)
        if k not in self._store:
            self._store[k] = evaluate_protocol(m.columns(list(keys)).values, m.y, config, seed)
        return self._store[k]


def individual_accuracy(m: FeatureMatrix, feature: str, config: ProtocolConfig = ProtocolConfig(), seed: int = 0,
                        cache: Optional[ProtocolCache] = None) -> float:
    """Mean held-out accuracy (percent) of a single-feature SVM under the protocol."""
    cache = cache or ProtocolCache()
    return cache.evaluate(m, [feature], config, seed).mean


def rank_features(m: FeatureMatrix, order: str = DESCENDING, seed: int = 0, config: ProtocolConfig = ProtocolConfig(),
                  accuracies: Optional[Mapping[str, float]] = None, features: Optional[Sequence[str]] = None,
                  cache: Optional[ProtocolCache] = None) -> List[RankedFeature]:
    """Order features for forward accumulation.

    Descending sorts by individual accuracy (ties by feature key). Random is a
    seeded permutation of the key-sorted feature list.
    """
    keys = sorted(features if features is not None else m.feature_ids)
    if not keys:
        raise ValueError("nothing to rank")
    if order == RANDOM:
        perm = np.random.default_rng(seed).permutation(len(keys))
        acc = accuracies or {}
        return [RankedFeature(keys[p], acc.get(keys[p]), i + 1) for i, p in enumerate(perm)]
    if order != DESCENDING:
        raise ValueError(f"unknown order {order!r}")
    if accuracies is None:
        cache = cache or ProtocolCache()
        accuracies = {k: individual_accuracy(m, k, config, seed, cache) for k in keys}
    ordered = sorted(keys, key=lambda k: (-accuracies[k], k))
    return [RankedFeature(k, accuracies[k], i + 1) for i, k in enumerate(ordered)]


def forward_accumulate(m: FeatureMatrix, ranked: Sequence[RankedFeature], seed: int = 0,
                       config: ProtocolConfig = ProtocolConfig(), order: str = DESCENDING,
                       cache: Optional[ProtocolCache] = None) -> AccuracyCurve:
    """Accuracy of the first n ranked features for n = 1..N."""
    if not ranked:
        raise ValueError("empty ranking")
    cache = cache or ProtocolCache()
    n_max = len(ranked) if config.max_curve_features is None else min(len(ranked), config.max_curve_features)
    points, results = [], []
    for n in range(1, n_max + 1):
        res = cache.evaluate(m, [r.feature for r in ranked[:n]], config, seed)
        points.append((n, res.mean, res.std))
        results.append(res)
    return AccuracyCurve(points, order, results)


def format_curve(curve: AccuracyCurve, cohort: str) -> str:
    lines = ["n\tmean_acc\tstd_acc\torder\tcohort"]
    lines += [f"{n}\t{mu!r}\t{sd!r}\t{curve.order}\t{cohort}" for n, mu, sd in curve.points]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# leak-free variant: selection redone inside every repetition's training split


@dataclass
class CleanResult:
    protocol: ProtocolResult
    chosen_n: List[int]
    test_curve: AccuracyCurve


def evaluate_clean(m: FeatureMatrix, config: ProtocolConfig = ProtocolConfig(), base_seed: int = 0) -> CleanResult:
    """Filter, rank and pick n on the training split only; score once on test."""
    y = m.y
    n_cap = config.max_curve_features
    accs = np.empty(config.repetitions)
    pooled = ConfusionCounts()
    chosen = []
    curve_acc: Dict[int, List[float]] = {}
    for r in range(config.repetitions):
        seed = base_seed + r
        tr, te = stratified_split(y, config.test_fraction, seed)
        COUNTERS["repetitions"] += 1
        COUNTERS["train_rows"] += tr.size
        COUNTERS["test_rows"] += te.size
        X_tr = impute_median(m.raw[tr])
        X_te = impute_median(m.raw[te], reference=m.raw[tr])
        sub = FeatureMatrix(
            [m.subject_ids[i] for i in tr], [m.labels[i] for i in tr], [m.sexes[i] for i in tr],
            [m.ages[i] for i in tr], list(m.feature_ids), m.raw[tr], X_tr,
        )
        passed = filter_features(sub, config.alpha).selected or [_best_p(sub, config.alpha)]
        col = {k: i for i, k in enumerate(m.feature_ids)}
        single = {k: svm.grid_search(X_tr[:, [col[k]]], y[tr], config.grid, seed, tol=config.cv_tol).best_accuracy for k in passed}
        ranked = sorted(passed, key=lambda k: (-single[k], k))
        if n_cap is not None:
            ranked = ranked[:n_cap]
        best_n, best_cv, fits = 1, -1.0, {}
        for n in range(1, len(ranked) + 1):
            cols = [col[k] for k in ranked[:n]]
            g = svm.grid_search(X_tr[:, cols], y[tr], config.grid, seed, tol=config.cv_tol)
            fits[n] = (cols, g)
            if g.best_accuracy > best_cv + 1e-12:
                best_n, best_cv = n, g.best_accuracy
        for n, (cols, g) in fits.items():
            model = svm.train_smo(X_tr[:, cols], y[tr], g.best_c, g.best_z, tol=config.fit_tol)
            cc = ConfusionCounts.from_labels(y[te], model.predict(X_te[:, cols]))
            curve_acc.setdefault(n, []).append(svm.metrics(cc).accuracy)
            if n == best_n:
                accs[r] = svm.metrics(cc).accuracy
                pooled = pooled + cc
        chosen.append(best_n)
    points = []
    for n in sorted(curve_acc):
        a = np.array(curve_acc[n])
        points.append((n, float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0))
    return CleanResult(ProtocolResult(accs, pooled), chosen, AccuracyCurve(points, DESCENDING))


def _best_p(m: FeatureMatrix, alpha: float) -> str:
    res = filter_features(m, alpha).results
    key = min(res, key=lambda k: (res[k].p_value, k))
    logger.warning("no feature passed the Mann-Whitney filter; falling back to %s (p=%.3g)", key, res[key].p_value)
    return key
