"""Entropy and energy measures on coordinate streams and their IMFs.

Probabilities come from a 16-bin equal-width histogram over the sequence's
min-max range; a constant sequence fills a single bin. Entropies are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from inkpd.emd import ImfSet

DEFAULT_BINS = 16
SNR_CAP_DB = 300.0
N_INTRINSIC = 3


@dataclass(frozen=True)
class HistogramEstimate:
    bin_count: int
    edges: np.ndarray
    probabilities: np.ndarray


@dataclass(frozen=True)
class EnergyPair:
    signal_energy: float
    noise_energy: float
    snr_db: float


def histogram(s, bins: int = DEFAULT_BINS) -> HistogramEstimate:
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty sequence")
    lo, hi = float(s.min()), float(s.max())
    if lo == hi:
        probs = np.zeros(bins)
        probs[0] = 1.0
        return HistogramEstimate(bins, np.linspace(lo, lo + 1.0, bins + 1), probs)
    counts, edges = np.histogram(s, bins=bins, range=(lo, hi))
    return HistogramEstimate(bins, edges, counts / s.size)


def shannon_from_probs(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) + 0.0


def renyi_from_probs(p, order: int) -> float:
    if order == 1:
        return shannon_from_probs(p)
    p = np.asarray(p, dtype=np.float64)
    p = p[p > 0]
    return float(math.log2(np.sum(p ** order)) / (1 - order)) + 0.0


def shannon_entropy(s, bins: int = DEFAULT_BINS) -> float:
    return shannon_from_probs(histogram(s, bins).probabilities)


def renyi_entropy(s, order: int, bins: int = DEFAULT_BINS) -> float:
    if order not in (2, 3):
        raise ValueError(f"Renyi order must be 2 or 3, got {order}")
    return renyi_from_probs(histogram(s, bins).probabilities, order)


def conventional_energy(s) -> float:
    s = np.asarray(s, dtype=np.float64)
    return float(np.dot(s, s))


def teager_kaiser(s) -> np.ndarray:
    """Teager-Kaiser operator ``s[n]**2 - s[n-1]*s[n+1]`` on interior samples."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[0] < 3:
        raise ValueError(f"Teager-Kaiser needs >= 3 samples, got {s.shape[0]}")
    return s[1:-1] ** 2 - s[:-2] * s[2:]


def teager_kaiser_energy(s) -> float:
    return float(np.sum(teager_kaiser(s)))


def snr_db(signal_energy: float, noise_energy: float) -> float:
    if signal_energy == 0 and noise_energy == 0:
        return 0.0
    if noise_energy == 0:
        return SNR_CAP_DB
    if signal_energy == 0:
        return -SNR_CAP_DB
    return float(np.clip(10.0 * math.log10(signal_energy / noise_energy), -SNR_CAP_DB, SNR_CAP_DB))


def _energy(s, kind: str) -> float:
    if kind == "CE":
        return conventional_energy(s)
    if kind == "TKE":
        # total TKE can go negative on rough signals; its magnitude is used
        return abs(teager_kaiser_energy(s))
    raise ValueError(f"unknown energy kind {kind!r}")


def energy_snr(s, imfs: ImfSet, kind: str) -> EnergyPair:
    """SNR with IMF 1 as the noise estimate and ``s - IMF1`` as the signal."""
    if len(imfs) == 0:
        raise ValueError("SNR needs at least one IMF")
    s = np.asarray(s, dtype=np.float64)
    noise = imfs.imfs[0]
    signal = s - noise
    es, en = _energy(signal, kind), _energy(noise, kind)
    return EnergyPair(es, en, snr_db(es, en))


def intrinsic_snr(imfs: ImfSet, kind: str) -> EnergyPair:
    """Intrinsic SNR: summed energies of IMFs 2.. over the energy of IMF 1.

    Unlike :func:`energy_snr` the trend residual and cross terms are left out.
    """
    if len(imfs) == 0:
        raise ValueError("SNR needs at least one IMF")
    en = _energy(imfs.imfs[0], kind)
    es = float(sum(_energy(h, kind) for h in imfs.imfs[1:]))
    return EnergyPair(es, en, snr_db(es, en))


INTRINSIC_MEASURES = ("ce", "tke", "shannon", "renyi2", "renyi3")


def intrinsic_measures(imfs: ImfSet, count: int = N_INTRINSIC, bins: int = DEFAULT_BINS) -> Dict[int, Dict[str, Optional[float]]]:
    """Per-IMF measures for IMFs ``1..count``; absent IMFs map to ``None`` values."""
    out: Dict[int, Dict[str, Optional[float]]] = {}
    for k in range(1, count + 1):
        if k > len(imfs):
            out[k] = {m: None for m in INTRINSIC_MEASURES}
            continue
        h = imfs.imfs[k - 1]
        p = histogram(h, bins).probabilities
        out[k] = {
            "ce": conventional_energy(h),
            "tke": teager_kaiser_energy(h),
            "shannon": shannon_from_probs(p),
            "renyi2": renyi_from_probs(p, 2),
            "renyi3": renyi_from_probs(p, 3),
        }
    return out
