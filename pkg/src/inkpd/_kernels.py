"""Hot numeric kernels, each with a numba and a numpy implementation.

The public wrappers at the bottom pick the implementation from
:data:`inkpd._accel.USE_NUMBA` at call time. Both paths implement the same
algorithm step for step, so results agree to rounding.
"""

import numpy as np

from inkpd import _accel
from inkpd._accel import njit

TAU = 1e-12


# ---------------------------------------------------------------------------
# extrema


@njit
def _find_extrema_nb(s):
    n = s.shape[0]
    maxima = np.empty(n, np.int64)
    minima = np.empty(n, np.int64)
    nmax = 0
    nmin = 0
    i = 1
    while i < n - 1:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        if j <= n - 2:
            left = s[i - 1]
            right = s[j + 1]
            if left < s[i] and right < s[i]:
                maxima[nmax] = (i + j) // 2
                nmax += 1
            elif left > s[i] and right > s[i]:
                minima[nmin] = (i + j) // 2
                nmin += 1
        i = j + 1
    return maxima[:nmax].copy(), minima[:nmin].copy()


def _find_extrema_np(s):
    n = s.shape[0]
    if n < 3:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    # collapse runs of equal values
    change = np.flatnonzero(np.diff(s) != 0)
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [n - 1]))
    vals = s[starts]
    if vals.size < 3:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    mid = vals[1:-1]
    left = vals[:-2]
    right = vals[2:]
    centers = (starts[1:-1] + ends[1:-1]) // 2
    is_max = (left < mid) & (right < mid)
    is_min = (left > mid) & (right > mid)
    return centers[is_max].astype(np.int64), centers[is_min].astype(np.int64)


# ---------------------------------------------------------------------------
# sign changes of first differences (direction changes)


@njit
def _sign_changes_nb(v):
    count = 0
    prev = 0.0
    for k in range(v.shape[0] - 1):
        d = v[k + 1] - v[k]
        if d == 0.0:
            continue
        if prev != 0.0 and (d > 0.0) != (prev > 0.0):
            count += 1
        prev = d
    return count


def _sign_changes_np(v):
    d = np.diff(v)
    sgn = np.sign(d[d != 0])
    if sgn.size < 2:
        return 0
    return int(np.count_nonzero(sgn[1:] != sgn[:-1]))


# ---------------------------------------------------------------------------
# SMO (second-order working set selection, LIBSVM-style updates)


@njit
def _smo_nb(K, y, C, tol, max_iter, alpha):
    n = y.shape[0]
    G = np.empty(n)
    for t in range(n):
        g = -1.0
        for s in range(n):
            if alpha[s] != 0.0:
                g += y[t] * y[s] * K[t, s] * alpha[s]
        G[t] = g
    it = 0
    gap = np.inf
    while True:
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0.0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if y[t] > 0:
                if alpha[t] > 0.0:
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    diff = gmax + G[t]
                    if diff > 0.0 and i >= 0:
                        quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if quad <= 0.0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            j = t
            else:
                if alpha[t] < C:
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                    diff = gmax - G[t]
                    if diff > 0.0 and i >= 0:
                        quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if quad <= 0.0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            j = t
        gap = gmax + gmax2
        if gap < tol or j == -1 or i == -1 or it >= max_iter:
            break
        it += 1
        old_i = alpha[i]
        old_j = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = total
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = total
        di = alpha[i] - old_i
        dj = alpha[j] - old_j
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * di + y[j] * K[t, j] * dj)
    return alpha, G, it, gap


def _smo_np(K, y, C, tol, max_iter, alpha):
    n = y.shape[0]
    G = y * (K @ (y * alpha)) - 1.0
    pos = y > 0
    diagK = np.diag(K).copy()
    it = 0
    gap = np.inf
    while True:
        up = np.where(pos, alpha < C, alpha > 0.0)
        low = np.where(pos, alpha > 0.0, alpha < C)
        yg = -y * G
        if up.any():
            cand = np.where(up, yg, -np.inf)
            # last index among ties, matching the >= scan of the loop version
            i = n - 1 - int(np.argmax(cand[::-1]))
            gmax = cand[i]
        else:
            i = -1
            gmax = -np.inf
        gmax2 = np.max(np.where(low, -yg, -np.inf)) if low.any() else -np.inf
        j = -1
        if i >= 0:
            diff = gmax - yg
            ok = low & (diff > 0.0)
            if ok.any():
                quad = diagK[i] + diagK - 2.0 * K[i]
                quad = np.where(quad <= 0.0, TAU, quad)
                obj = np.where(ok, -(diff * diff) / quad, np.inf)
                j = n - 1 - int(np.argmin(obj[::-1]))
        gap = gmax + gmax2
        if gap < tol or j == -1 or i == -1 or it >= max_iter:
            break
        it += 1
        old_i = alpha[i]
        old_j = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = TAU
        ai = alpha[i]
        aj = alpha[j]
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0.0:
                if aj < 0.0:
                    aj = 0.0
                    ai = diff
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = -diff
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if aj < 0.0:
                    aj = 0.0
                    ai = total
                if ai < 0.0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        di = ai - old_i
        dj = aj - old_j
        G += y * (y[i] * K[:, i] * di + y[j] * K[:, j] * dj)
    return alpha, G, it, gap


@njit
def _rho_nb(y, G, alpha, C):
    ub = np.inf
    lb = -np.inf
    total = 0.0
    nfree = 0
    for t in range(y.shape[0]):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0.0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            total += yg
            nfree += 1
    if nfree > 0:
        return total / nfree
    return (ub + lb) / 2.0


def _rho_np(y, G, alpha, C):
    yg = y * G
    free = (alpha > 0.0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    at_upper = alpha >= C
    ub_mask = np.where(at_upper, y < 0, y > 0)
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[~ub_mask].max() if (~ub_mask).any() else -np.inf
    return float((ub + lb) / 2.0)


# ---------------------------------------------------------------------------
# one CV fold across a whole (C, z) grid, warm-started along ascending C


@njit
def _grid_fold_nb(D_tr, D_te, y_tr, y_te, Cs, zs, tol, max_iter):
    nC = Cs.shape[0]
    nz = zs.shape[0]
    n = y_tr.shape[0]
    m = y_te.shape[0]
    correct = np.zeros((nC, nz), np.int64)
    for zi in range(nz):
        g = 1.0 / (2.0 * zs[zi] * zs[zi])
        K = np.exp(-D_tr * g)
        Kte = np.exp(-D_te * g)
        alpha = np.zeros(n)
        for ci in range(nC):
            alpha, G, it, gap = _smo_nb(K, y_tr, Cs[ci], tol, max_iter, alpha)
            rho = _rho_nb(y_tr, G, alpha, Cs[ci])
            hits = 0
            for t in range(m):
                f = -rho
                for s in range(n):
                    if alpha[s] != 0.0:
                        f += alpha[s] * y_tr[s] * Kte[t, s]
                pred = 1.0 if f >= 0.0 else -1.0
                if pred == y_te[t]:
                    hits += 1
            correct[ci, zi] = hits
    return correct


def _grid_fold_np(D_tr, D_te, y_tr, y_te, Cs, zs, tol, max_iter):
    correct = np.zeros((Cs.shape[0], zs.shape[0]), np.int64)
    for zi, z in enumerate(zs):
        g = 1.0 / (2.0 * z * z)
        K = np.exp(-D_tr * g)
        Kte = np.exp(-D_te * g)
        alpha = np.zeros(y_tr.shape[0])
        for ci, C in enumerate(Cs):
            alpha, G, _, _ = _smo_np(K, y_tr, C, tol, max_iter, alpha)
            rho = _rho_np(y_tr, G, alpha, C)
            f = Kte @ (alpha * y_tr) - rho
            pred = np.where(f >= 0.0, 1.0, -1.0)
            correct[ci, zi] = int(np.count_nonzero(pred == y_te))
    return correct


# ---------------------------------------------------------------------------
# dispatch


def find_extrema(s):
    s = np.ascontiguousarray(s, dtype=np.float64)
    return _find_extrema_nb(s) if _accel.USE_NUMBA else _find_extrema_np(s)


def sign_changes(v):
    v = np.ascontiguousarray(v, dtype=np.float64)
    return int(_sign_changes_nb(v) if _accel.USE_NUMBA else _sign_changes_np(v))


def smo(K, y, C, tol, max_iter, alpha=None):
    """Solve the SVM dual. Returns ``(alpha, grad, iterations, gap, rho)``."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    alpha = np.zeros(y.shape[0]) if alpha is None else np.array(alpha, dtype=np.float64)
    if _accel.USE_NUMBA:
        alpha, G, it, gap = _smo_nb(K, y, float(C), float(tol), int(max_iter), alpha)
        rho = _rho_nb(y, G, alpha, float(C))
    else:
        alpha, G, it, gap = _smo_np(K, y, float(C), float(tol), int(max_iter), alpha)
        rho = _rho_np(y, G, alpha, float(C))
    return alpha, G, int(it), float(gap), float(rho)


def grid_fold(D_tr, D_te, y_tr, y_te, Cs, zs, tol, max_iter):
    """Correct-prediction counts on one fold for every ``(C, z)`` cell.

    ``Cs`` must be ascending: the solution for one C seeds the next.
    """
    args = (
        np.ascontiguousarray(D_tr, dtype=np.float64),
        np.ascontiguousarray(D_te, dtype=np.float64),
        np.ascontiguousarray(y_tr, dtype=np.float64),
        np.ascontiguousarray(y_te, dtype=np.float64),
        np.ascontiguousarray(Cs, dtype=np.float64),
        np.ascontiguousarray(zs, dtype=np.float64),
        float(tol),
        int(max_iter),
    )
    return _grid_fold_nb(*args) if _accel.USE_NUMBA else _grid_fold_np(*args)
