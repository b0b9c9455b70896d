"""RBF soft-margin SVM trained in the dual with SMO, plus CV grid search.

The primal weight vector is never formed; a model is its support vectors,
signed multipliers ``alpha_i * y_i``, bias and kernel width. Labels are +1
(PD) and -1 (HC). A decision value of exactly 0 is classified +1.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from inkpd import _kernels

logger = logging.getLogger(__name__)

SMO_TOL = 1e-6
FORMAT_VERSION = 1

C_GRID = (0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0)
Z_GRID = (0.03, 0.06, 0.12, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)

# Instrumentation: grid cells, CV folds, SMO fits, protocol repetitions.
COUNTERS: Counter = Counter()


def _max_iter(n: int) -> int:
    return max(100_000, 1000 * n)


# ---------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # population std; 0 marks a constant column

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        return cls(X.mean(axis=0), X.std(axis=0))

    @classmethod
    def identity(cls, d: int) -> "Standardizer":
        return cls(np.zeros(d), np.ones(d))

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        scale = np.where(self.constant, 1.0, self.std)
        Z = (X - self.mean) / scale
        Z[:, self.constant] = 0.0
        return Z


# ---------------------------------------------------------------------------
# kernel


def sq_dists(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    D = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(D, 0.0)


def rbf_kernel(u, v, z: float) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.size} vs {v.size}")
    if z <= 0:
        raise ValueError("kernel width must be positive")
    d = u - v
    return math.exp(-float(d @ d) / (2.0 * z * z))


def kernel_matrix(A, B, z: float) -> np.ndarray:
    return np.exp(-sq_dists(A, B) / (2.0 * z * z))


# ---------------------------------------------------------------------------
# model


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # standardized rows
    coef: np.ndarray  # alpha_i * y_i
    bias: float
    kernel_width: float
    slack: float
    standardizer: Standardizer
    n_iter: int = 0
    gap: float = 0.0

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.coef)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.standardizer.mean.shape[0]:
            raise ValueError(f"expected {self.standardizer.mean.shape[0]} features, got {X.shape[1]}")
        Z = self.standardizer.apply(X)
        if self.support_vectors.shape[0] == 0:
            return np.full(Z.shape[0], self.bias)
        return kernel_matrix(Z, self.support_vectors, self.kernel_width) @ self.coef + self.bias

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0.0, 1, -1)

    def to_json(self) -> str:
        doc = {
            "format": "inkpd-svm",
            "format_version": FORMAT_VERSION,
            "kernel": "rbf",
            "kernel_width": self.kernel_width,
            "slack": self.slack,
            "bias": self.bias,
            "coef": self.coef.tolist(),
            "support_vectors": self.support_vectors.tolist(),
            "standardizer": {"mean": self.standardizer.mean.tolist(), "std": self.standardizer.std.tolist()},
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        doc = json.loads(text)
        if doc.get("format") != "inkpd-svm" or doc.get("format_version") != FORMAT_VERSION:
            raise ValueError("not an inkpd-svm v1 model file")
        d = len(doc["standardizer"]["mean"])
        sv = np.array(doc["support_vectors"], dtype=np.float64).reshape(-1, d)
        return cls(
            sv,
            np.array(doc["coef"], dtype=np.float64),
            float(doc["bias"]),
            float(doc["kernel_width"]),
            float(doc["slack"]),
            Standardizer(np.array(doc["standardizer"]["mean"]), np.array(doc["standardizer"]["std"])),
        )


def train_smo(X, y, c: float, z: float, *, tol: float = SMO_TOL, standardize: bool = True, seed=None) -> SvmModel:
    """Fit an RBF-SVM on raw rows ``X`` (standardized internally).

    Working-pair selection is deterministic (maximal violating pair with
    second-order gain), so ``seed`` does not change the result; it is accepted
    for interface symmetry with the rest of the pipeline.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ValueError("training needs both classes (+1 and -1)")
    if c <= 0 or z <= 0:
        raise ValueError("C and z must be positive")
    std = Standardizer.fit(X) if standardize else Standardizer.identity(X.shape[1])
    Z = std.apply(X)
    K = kernel_matrix(Z, Z, z)
    alpha, _, it, gap, rho = _kernels.smo(K, y, c, tol, _max_iter(len(y)))
    COUNTERS["smo_fits"] += 1
    if gap >= tol:
        logger.warning("SMO stopped at iteration cap with gap %.3g", gap)
    sv = alpha > 0
    return SvmModel(Z[sv], alpha[sv] * y[sv], -rho, float(z), float(c), std, it, gap)


def dual_objective(K, y, alpha) -> float:
    q = alpha * y
    return 0.5 * float(q @ K @ q) - float(alpha.sum())


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionCounts":
        t = np.asarray(y_true) > 0
        p = np.asarray(y_pred) > 0
        return cls(int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(~t & ~p)), int(np.sum(t & ~p)))


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: Optional[float]
    recall: Optional[float]


def metrics(c: ConfusionCounts) -> Metrics:
    """Accuracy, precision and recall in percent (None when undefined)."""
    if c.total <= 0:
        raise ValueError("no evaluated samples")
    acc = (c.tp + c.tn) / c.total * 100.0
    prec = c.tp / (c.tp + c.fp) * 100.0 if c.tp + c.fp > 0 else None
    rec = c.tp / (c.tp + c.fn) * 100.0 if c.tp + c.fn > 0 else None
    return Metrics(acc, prec, rec)


# ---------------------------------------------------------------------------
# cross-validation


def stratified_kfold(labels, k: int, seed, strict: bool = True) -> np.ndarray:
    """Fold index per sample; each class is dealt round-robin after a seeded shuffle."""
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    smallest = int(counts.min())
    if smallest < 2:
        if strict:
            raise ValueError(f"class {classes[np.argmin(counts)]!r} has {smallest} sample(s); cannot stratify")
        k_eff = 2
    else:
        k_eff = min(k, smallest)
    if k_eff < k:
        logger.info("stratified_kfold: k lowered from %d to %d (minority class size)", k, k_eff)
    rng = np.random.default_rng(seed)
    folds = np.empty(labels.shape[0], dtype=np.int64)
    offset = 0
    for cls in classes:
        idx = rng.permutation(np.flatnonzero(labels == cls))
        folds[idx] = (offset + np.arange(idx.size)) % k_eff
        offset = (offset + idx.size) % k_eff
    return folds


@dataclass(frozen=True)
class GridSpec:
    c_values: Tuple[float, ...] = C_GRID
    z_values: Tuple[float, ...] = Z_GRID
    folds: int = 10

    @property
    def n_cells(self) -> int:
        return len(self.c_values) * len(self.z_values)


@dataclass
class GridResult:
    best_c: float
    best_z: float
    best_accuracy: float
    table: np.ndarray  # mean CV accuracy (fraction), shape (len(C), len(z))
    grid: GridSpec = field(default_factory=GridSpec)


def grid_search(X, y, grid: GridSpec = GridSpec(), seed=0, *, tol: float = SMO_TOL) -> GridResult:
    """Fold-averaged CV accuracy for every (C, z); standardization is refit per fold."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    folds = stratified_kfold(y, grid.folds, seed)
    k = int(folds.max()) + 1
    Cs = np.asarray(grid.c_values, dtype=np.float64)
    order = np.argsort(Cs, kind="stable")
    zs = np.asarray(grid.z_values, dtype=np.float64)
    table = np.zeros((Cs.size, zs.size))
    for f in range(k):
        tr, te = folds != f, folds == f
        y_tr, y_te = y[tr], y[te]
        if np.unique(y_tr).size < 2:
            acc = np.full((Cs.size, zs.size), np.mean(y_te == y_tr[0]))
        else:
            std = Standardizer.fit(X[tr])
            A, B = std.apply(X[tr]), std.apply(X[te])
            counts = _kernels.grid_fold(sq_dists(A, A), sq_dists(B, A), y_tr, y_te, Cs[order], zs, tol, _max_iter(y_tr.size))
            acc = np.empty_like(table)
            acc[order] = counts / y_te.size
            COUNTERS["smo_fits"] += Cs.size * zs.size
        table += acc
    table /= k
    COUNTERS["cv_folds"] += k
    COUNTERS["grid_cells"] += Cs.size * zs.size
    COUNTERS["grid_searches"] += 1
    best = (-1.0, 0, 0)
    for ci in order:
        for zi in np.argsort(zs, kind="stable"):
            if table[ci, zi] > best[0] + 1e-12:
                best = (table[ci, zi], ci, zi)
    acc, ci, zi = best
    return GridResult(float(Cs[ci]), float(zs[zi]), float(acc), table, grid)
