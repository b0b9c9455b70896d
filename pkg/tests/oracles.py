"""Independent reference implementations used by the tests.

Nothing here imports from ``inkpd``; each oracle recomputes its quantity from
first principles by a different route than the package code.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# Mann-Whitney: brute-force enumeration of label assignments, U by pair counting


def u_by_pairs(a, b) -> float:
    """U for sample ``a``: pairs (i, j) with a_i > b_j, ties counting one half."""
    a = np.asarray(a, dtype=float)[:, None]
    b = np.asarray(b, dtype=float)[None, :]
    return float(np.sum(a > b) + 0.5 * np.sum(a == b))


def exact_p_enumeration(a, b) -> float:
    """Two-sided p: 2 * min(tail) over every relabelling of the pooled sample."""
    pooled = list(a) + list(b)
    n1 = len(a)
    u_obs = u_by_pairs(a, b)
    us = []
    for idx in itertools.combinations(range(len(pooled)), n1):
        chosen = set(idx)
        aa = [pooled[i] for i in idx]
        bb = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        us.append(u_by_pairs(aa, bb))
    us = np.array(us)
    lower = np.mean(us <= u_obs + 1e-9)
    upper = np.mean(us >= u_obs - 1e-9)
    return float(min(1.0, 2.0 * min(lower, upper)))


# ---------------------------------------------------------------------------
# SVM dual: projected gradient on {0 <= a <= C, y.a = 0} plus active-set polish


def project(v, y, C):
    """Euclidean projection of ``v`` onto {0 <= a <= C, y.a = 0}.

    a(lam) = clip(v - lam * y, 0, C) and y.a(lam) is nonincreasing in lam, so
    the root is bracketed by the breakpoints and found by interpolation.
    """
    def g(lam):
        return float(y @ np.clip(v - lam * y, 0.0, C))

    bps = np.unique(np.concatenate([(v - 0.0) * y, (v - C) * y]))
    vals = np.array([g(t) for t in bps])
    if vals[0] < 0 or vals[-1] > 0:
        raise ValueError("infeasible projection")
    k = int(np.searchsorted(-vals, 0.0))  # first breakpoint with g <= 0
    if vals[k] == 0 or k == 0:
        lam = bps[k]
    else:
        t0, t1, g0, g1 = bps[k - 1], bps[k], vals[k - 1], vals[k]
        lam = t0 + (t1 - t0) * g0 / (g0 - g1)
    a = np.clip(v - lam * y, 0.0, C)
    return a


def dual_value(Q, a) -> float:
    return 0.5 * float(a @ Q @ a) - float(a.sum())


def kkt_violation(Q, y, a, C) -> float:
    """max over I_up of -y G minus min over I_low of -y G (0 when optimal)."""
    G = Q @ a - 1.0
    up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
    low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(np.max(-y[up] * G[up]) - np.min(-y[low] * G[low])))


def _solve_face(Q, y, C, state):
    """Stationary point of the dual on the face given by ``state`` (0 lower, 1 free, 2 upper)."""
    b = np.where(state == 2, C, 0.0)
    F = np.flatnonzero(state == 1)
    B = np.flatnonzero(state != 1)
    if F.size == 0:
        return b if abs(y @ b) < 1e-12 * max(1.0, C) else None
    m = F.size
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = Q[np.ix_(F, F)]
    A[:m, m] = y[F]
    A[m, :m] = y[F]
    rhs = np.empty(m + 1)
    rhs[:m] = 1.0 - Q[np.ix_(F, B)] @ b[B]
    rhs[m] = -(y[B] @ b[B])
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    out = b.copy()
    out[F] = sol[:m]
    tol = 1e-12 * max(1.0, C)
    if np.any(out < -tol) or np.any(out > C + tol) or abs(y @ out) > 1e-9 * max(1.0, C):
        return None
    return np.clip(out, 0.0, C)


def enumerate_faces(Q, y, C):
    """Exact minimiser for small n: best feasible face-stationary point over all 3^n faces."""
    n = y.size
    best, best_val = None, math.inf
    for state in itertools.product((0, 1, 2), repeat=n):
        a = _solve_face(Q, y, C, np.array(state))
        if a is not None:
            v = dual_value(Q, a)
            if v < best_val:
                best, best_val = a, v
    return best


def qp_oracle(Q, y, C, iters=4000):
    """Minimise the SVM dual by accelerated projected gradient, then polish.

    The polish step solves the KKT equations on the estimated free set
    exactly. If no polished point passes the KKT check (ill-conditioned Q),
    falls back to :func:`enumerate_faces` when n <= 8.
    """
    Q = np.asarray(Q, float)
    y = np.asarray(y, float)
    n = y.size
    L = max(np.linalg.eigvalsh(Q).max(), 1e-12)
    step = 1.0 / L
    a = project(np.full(n, min(C, 1.0) * 0.5), y, C)
    z, t = a.copy(), 1.0
    best, best_val = a, dual_value(Q, a)
    for it in range(iters):
        a_next = project(z - step * (Q @ z - 1.0), y, C)
        t_next = (1 + math.sqrt(1 + 4 * t * t)) / 2
        z = a_next + (t - 1) / t_next * (a_next - a)
        a, t = a_next, t_next
        if (it + 1) % 200 == 0:
            for margin in (1e-9 * C, 1e-6 * C, 1e-4 * C, 1e-2 * C):
                state = np.where(a >= C - margin, 2, np.where(a > margin, 1, 0))
                p = _solve_face(Q, y, C, state)
                if p is not None and kkt_violation(Q, y, p, C) < 1e-10:
                    return p
            v = dual_value(Q, a)
            if v < best_val:
                best, best_val = a.copy(), v
    v = dual_value(Q, a)
    if v < best_val:
        best, best_val = a, v
    if n <= 8:
        exact = enumerate_faces(Q, y, C)
        if exact is not None and dual_value(Q, exact) < best_val:
            return exact
    return best
