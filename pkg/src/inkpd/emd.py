"""Empirical mode decomposition.

Signals are indexed by sample number. Envelopes are natural cubic splines
through the extrema (each refined to the vertex of the parabola through it
and its neighbours), with the two extrema nearest each end mirrored across
that end. Sifting stops when the Cauchy-type ratio
``sum((h_prev - h)**2) / sum(h_prev**2)`` drops below 0.2 or after 10
iterations; decomposition stops at 10 IMFs or when the remainder has fewer
than two maxima or two minima, or when sifting only returns rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from inkpd import _kernels

SIFT_THRESHOLD = 0.2
MAX_SIFT_ITERATIONS = 10
MAX_IMFS = 10
# an IMF below this fraction of the input's peak amplitude is rounding noise
NEGLIGIBLE = 1e-9


class EnvelopeUndefined(ValueError):
    """Fewer than two extrema: no spline envelope can be drawn."""


@dataclass(frozen=True)
class ImfSet:
    imfs: Tuple[np.ndarray, ...]
    residual: np.ndarray
    source_len: int

    def __len__(self):
        return len(self.imfs)

    def reconstruct(self) -> np.ndarray:
        return np.sum(self.imfs, axis=0) + self.residual if self.imfs else self.residual.copy()


def find_extrema(s) -> Tuple[np.ndarray, np.ndarray]:
    """Indices of strict interior maxima and minima (plateau midpoints)."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[0] < 3:
        raise ValueError(f"need at least 3 samples to find extrema, got {s.shape[0]}")
    return _kernels.find_extrema(s)


def refine_extrema(s, idx) -> Tuple[np.ndarray, np.ndarray]:
    """Vertex of the parabola through each extremum and its two neighbours.

    Sampled peaks sit up to half a sample away from the true peak; the
    vertex recovers position and height to third order in the sample step.
    """
    s = np.asarray(s, dtype=np.float64)
    idx = np.asarray(idx, dtype=np.int64)
    pos = idx.astype(np.float64)
    val = s[idx].copy()
    inner = (idx > 0) & (idx < s.shape[0] - 1)
    i = idx[inner]
    left, mid, right = s[i - 1], s[i], s[i + 1]
    curv = left - 2.0 * mid + right
    ok = curv != 0
    shift = np.zeros_like(mid)
    shift[ok] = np.clip(0.5 * (left[ok] - right[ok]) / curv[ok], -0.5, 0.5)
    pos[inner] = i + shift
    val[inner] = mid - 0.25 * (left - right) * shift
    return pos, val


def envelope(s, extrema, mirror: bool = True, refine: bool = True) -> np.ndarray:
    """Natural cubic spline through the extrema, evaluated at every sample.

    With ``refine`` the knots are the parabolic vertices of the extrema
    (:func:`refine_extrema`); with ``mirror`` the two knots nearest each end
    are reflected across that end.
    """
    s = np.asarray(s, dtype=np.float64)
    idx = np.asarray(extrema, dtype=np.int64)
    if idx.size < 2:
        raise EnvelopeUndefined(f"{idx.size} extrema")
    if refine:
        pos, val = refine_extrema(s, idx)
    else:
        pos, val = idx.astype(np.float64), s[idx]
    if mirror:
        last = float(s.shape[0] - 1)
        pos = np.concatenate((-pos[1::-1], pos, 2 * last - pos[:-3:-1]))
        val = np.concatenate((val[1::-1], val, val[:-3:-1]))
    spline = CubicSpline(pos, val, bc_type="natural")
    return spline(np.arange(s.shape[0], dtype=np.float64))


def _envelope_mean(h):
    maxima, minima = _kernels.find_extrema(h)
    if maxima.size < 2 or minima.size < 2:
        raise EnvelopeUndefined("not enough extrema")
    return 0.5 * (envelope(h, maxima) + envelope(h, minima))


def sift(s, threshold: float = SIFT_THRESHOLD, max_iter: int = MAX_SIFT_ITERATIONS) -> Tuple[np.ndarray, str]:
    """Extract one IMF candidate.

    Returns ``(h, reason)`` where reason is ``"converged"``, ``"max_iter"``,
    ``"extrema_exhausted"`` (envelopes vanished mid-sifting) or ``"residual"``
    (no envelope on the first pass: ``s`` is returned unchanged).
    """
    h = np.array(s, dtype=np.float64)
    if h.shape[0] < 4:
        raise ValueError(f"need at least 4 samples to sift, got {h.shape[0]}")
    for k in range(max_iter):
        try:
            m = _envelope_mean(h)
        except EnvelopeUndefined:
            return h, ("residual" if k == 0 else "extrema_exhausted")
        new = h - m
        denom = float(np.dot(h, h))
        ratio = float(np.dot(m, m)) / denom if denom > 0 else 0.0
        h = new
        if ratio < threshold:
            return h, "converged"
    return h, "max_iter"


def decompose(s, max_imfs: int = MAX_IMFS) -> ImfSet:
    s = np.asarray(s, dtype=np.float64)
    if s.shape[0] < 4:
        raise ValueError(f"need at least 4 samples to decompose, got {s.shape[0]}")
    if max_imfs < 1:
        raise ValueError("max_imfs must be >= 1")
    imfs: List[np.ndarray] = []
    rest = s.copy()
    scale = float(np.max(np.abs(s)))
    while len(imfs) < max_imfs:
        maxima, minima = _kernels.find_extrema(rest)
        if maxima.size < 2 or minima.size < 2:
            break
        h, reason = sift(rest)
        if reason == "residual" or np.max(np.abs(h)) <= NEGLIGIBLE * scale:
            break
        imfs.append(h)
        rest = rest - h
    total = np.sum(imfs, axis=0) if imfs else np.zeros_like(s)
    return ImfSet(tuple(imfs), s - total, s.shape[0])
