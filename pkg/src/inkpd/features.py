"""Statistical functionals, the feature registry and feature matrices.

A feature is named by :class:`FeatureId` and rendered as
``T<task>:<stream>:<base>:<functional>``, e.g. ``T7:InAir:vx:p90``.

Two registries exist. ``"full"`` (322 features per task):

* per stream (OnSurface, InAir)
    - ``speed``, ``vx``, ``vy``: the full battery of 22 functionals
    - ``acc``, ``ax``, ``ay``, ``jerk``, ``jx``, ``jy``: the core battery of 8
    - direction-change counts ``ncv_{speed,vx,vy}``, ``nca_{acc,ax,ay}`` and
      their per-second ``rel_`` forms
* OnSurface only
    - ``pressure_rate``: the full battery
    - for coordinates ``x`` and ``y`` (mean removed): Shannon and Renyi-2/3
      entropy, CE, TKE, and the SNR variants ``snr_ce``, ``snr_tke``,
      ``snr_ice``, ``snr_itke``
    - per IMF 1..3 of ``x`` and ``y``: CE, TKE, Shannon, Renyi-2, Renyi-3

``"compact"`` (64 features) keeps a subset of the same definitions for fast
end-to-end runs.

Table-style names map onto registry keys as in this example list::

    "90th Percentile of In-Air velocity in X-direction"   -> InAir:vx:p90
    "40% Trimmed Mean of In-Air Velocity in Y-direction"  -> InAir:vy:trim40
    "GeoMean of In Air jerk in Y-direction"               -> InAir:jy:geomean
    "1st Percentile of Pressure rate"                     -> OnSurface:pressure_rate:p1
    "Kurto of On Surface Velocity"                        -> OnSurface:speed:kurtosis
    "Mode of On Surface Velocity in X-direction"          -> OnSurface:vx:mode
    "Relative NCV In Air"                                 -> InAir:rel_ncv_speed:value
    "Relative NCA In-Air"                                 -> InAir:rel_nca_acc:value
    "SNR of ICE of x-coordinate"                          -> OnSurface:x:snr_ice
    "SNR of CE of y-coordinate"                           -> OnSurface:y:snr_ce
    "Intrinsic Shannon Entropy for Second IMF of X"       -> OnSurface:x_imf2:shannon
    "Intrinsic second order Renyi Entropy for First IMF"  -> OnSurface:x_imf1:renyi2
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from inkpd import emd, measures
from inkpd.ink_data import IN_AIR, ON_SURFACE, Dataset, Recording, segment_strokes
from inkpd.kinematics import stream_kinematics, stream_samples

logger = logging.getLogger(__name__)

GLOBAL = "Global"
STREAMS = (ON_SURFACE, IN_AIR, GLOBAL)

PERCENTILES = (1, 5, 10, 20, 30, 50, 90, 95, 99)
GEOMEAN_FLOOR = 1e-12


class RegistryError(KeyError):
    pass


# ---------------------------------------------------------------------------
# functionals


def _central_moment(s, k):
    return float(np.mean((s - s.mean()) ** k))


def _kurtosis(s):
    m2 = _central_moment(s, 2)
    return _central_moment(s, 4) / (m2 * m2) if m2 > 0 else math.nan


def _mode(s):
    est = measures.histogram(s)
    k = int(np.argmax(est.probabilities))
    return 0.5 * (est.edges[k] + est.edges[k + 1]) if s.min() != s.max() else float(s[0])


def _geomean(s):
    return float(np.exp(np.mean(np.log(np.maximum(np.abs(s), GEOMEAN_FLOOR)))))


FUNCTIONALS: Dict[str, Callable[[np.ndarray], float]] = {
    "mean": lambda s: float(np.mean(s)),
    "geomean": _geomean,
    "median": lambda s: float(np.median(s)),
    "mode": _mode,
    "std": lambda s: float(np.std(s)),
    "moment2": lambda s: _central_moment(s, 2),
    "moment3": lambda s: _central_moment(s, 3),
    "kurtosis": _kurtosis,
    "range": lambda s: float(np.ptp(s)),
    "robust_range": lambda s: float(np.percentile(s, 95) - np.percentile(s, 5)),
    **{f"p{q}": (lambda s, q=q: float(np.percentile(s, q))) for q in PERCENTILES},
    # trimXX removes XX/2 percent from each tail
    **{f"trim{q}": (lambda s, q=q: float(stats.trim_mean(s, q / 200.0))) for q in (20, 30, 40)},
    "value": lambda s: float(np.asarray(s).reshape(-1)[0]),
}

FULL_BATTERY = tuple(k for k in FUNCTIONALS if k != "value")
CORE_BATTERY = ("mean", "geomean", "median", "std", "moment3", "kurtosis", "robust_range", "trim30")


def functional(name: str, s) -> float:
    """Evaluate one functional; NaN (missing) for an empty sequence."""
    try:
        fn = FUNCTIONALS[name]
    except KeyError:
        raise RegistryError(f"unknown functional {name!r}") from None
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        return math.nan
    return fn(s)


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True, order=True)
class FeatureId:
    task: int
    stream: str
    base: str
    functional: str

    @property
    def key(self) -> str:
        return f"T{self.task}:{self.stream}:{self.base}:{self.functional}"

    def __str__(self):
        return self.key

    @classmethod
    def parse(cls, key: str) -> "FeatureId":
        t, stream, base, fn = key.split(":")
        return cls(int(t[1:]), stream, base, fn)


KIN_VEL = ("speed", "vx", "vy")
KIN_HIGHER = ("acc", "ax", "ay", "jerk", "jx", "jy")
COUNTS = ("ncv_speed", "ncv_vx", "ncv_vy", "nca_acc", "nca_ax", "nca_ay")
COORD_MEASURES = ("shannon", "renyi2", "renyi3", "ce", "tke", "snr_ce", "snr_tke", "snr_ice", "snr_itke")


def _full_specs() -> List[Tuple[str, str, str]]:
    specs = []
    for stream in (ON_SURFACE, IN_AIR):
        specs += [(stream, b, f) for b in KIN_VEL for f in FULL_BATTERY]
        specs += [(stream, b, f) for b in KIN_HIGHER for f in CORE_BATTERY]
        specs += [(stream, c, "value") for c in COUNTS]
        specs += [(stream, "rel_" + c, "value") for c in COUNTS]
    specs += [(ON_SURFACE, "pressure_rate", f) for f in FULL_BATTERY]
    for coord in ("x", "y"):
        specs += [(ON_SURFACE, coord, m) for m in COORD_MEASURES]
        for k in range(1, measures.N_INTRINSIC + 1):
            specs += [(ON_SURFACE, f"{coord}_imf{k}", m) for m in measures.INTRINSIC_MEASURES]
    return specs


def _compact_specs() -> List[Tuple[str, str, str]]:
    specs = []
    for stream in (ON_SURFACE, IN_AIR):
        specs += [(stream, b, f) for b in KIN_VEL for f in ("mean", "std", "p90", "robust_range")]
        specs += [(stream, b, f) for b in ("acc", "jerk") for f in ("mean", "std")]
        specs += [(stream, c, "value") for c in ("ncv_speed", "rel_ncv_speed", "nca_acc", "rel_nca_acc")]
    specs += [(ON_SURFACE, "pressure_rate", f) for f in ("mean", "std", "p1", "robust_range")]
    for coord in ("x", "y"):
        specs += [(ON_SURFACE, coord, m) for m in ("shannon", "renyi2", "ce", "tke", "snr_ce", "snr_tke", "snr_ice", "snr_itke")]
        specs += [(ON_SURFACE, f"{coord}_imf1", m) for m in ("ce", "tke")]
    return specs


REGISTRIES = {"full": _full_specs, "compact": _compact_specs}


@lru_cache(maxsize=None)
def registry(task: int, profile: str = "full") -> Tuple[FeatureId, ...]:
    """Feature ids for a task, sorted by rendered key. Depends on nothing else."""
    if not 1 <= task <= 7:
        raise ValueError(f"task {task} outside 1..7")
    try:
        specs = REGISTRIES[profile]()
    except KeyError:
        raise RegistryError(f"unknown registry profile {profile!r}") from None
    ids = {FeatureId(task, s, b, f) for s, b, f in specs}
    return tuple(sorted(ids, key=lambda fid: fid.key))


# ---------------------------------------------------------------------------
# per-recording evaluation


class _BaseValues:
    """Lazily computed base series/scalars for one recording."""

    def __init__(self, rec: Recording):
        self.rec = rec
        self.strokes = segment_strokes(rec)
        self._kin = {}
        self._coord = {}

    def kin(self, stream):
        if stream not in self._kin:
            self._kin[stream] = stream_kinematics(self.rec, stream, self.strokes)
        return self._kin[stream]

    def coord(self, name):
        # (centered signal, ImfSet or None, per-IMF measures or None)
        if name not in self._coord:
            sub = stream_samples(self.rec, ON_SURFACE, self.strokes)
            s = sub.channel(name)
            s = s - s.mean() if s.size else s
            imfs = emd.decompose(s) if s.size >= 4 else None
            intrinsic = measures.intrinsic_measures(imfs) if imfs is not None else None
            self._coord[name] = (s, imfs, intrinsic)
        return self._coord[name]

    def series(self, stream: str, base: str) -> np.ndarray:
        kin = self.kin(stream)
        if base.startswith(("ncv_", "nca_", "rel_")):
            rel = base.startswith("rel_")
            raw = base[4:] if rel else base
            src = raw.split("_", 1)[1]
            if kin.n_strokes == 0 or not kin.pieces.get(src):
                return np.empty(0)
            count = kin.direction_changes(src)
            if rel:
                return np.array([count / kin.duration]) if kin.duration > 0 else np.empty(0)
            return np.array([float(count)])
        return kin.series(base)

    def coord_measure(self, base: str, name: str) -> float:
        coord, _, imf = base.partition("_imf")
        s, imfs, intrinsic = self.coord(coord)
        if imf:
            if intrinsic is None:
                return math.nan
            v = intrinsic[int(imf)][name]
            return math.nan if v is None else v
        if s.size == 0:
            return math.nan
        if name == "shannon":
            return measures.shannon_entropy(s)
        if name in ("renyi2", "renyi3"):
            return measures.renyi_entropy(s, int(name[-1]))
        if name == "ce":
            return measures.conventional_energy(s)
        if name == "tke":
            return measures.teager_kaiser_energy(s) if s.size >= 3 else math.nan
        if imfs is None or len(imfs) == 0:
            return math.nan
        kind = name.split("_")[1]
        if kind.startswith("i"):
            return measures.intrinsic_snr(imfs, kind[1:].upper()).snr_db
        return measures.energy_snr(s, imfs, kind.upper()).snr_db


@dataclass
class FeatureVector:
    subject_id: Optional[str]
    task: int
    ids: Tuple[FeatureId, ...]
    values: np.ndarray  # NaN = missing

    def as_dict(self) -> Dict[str, float]:
        return {fid.key: float(v) for fid, v in zip(self.ids, self.values)}

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


def build_feature_vector(rec: Recording, profile: str = "full") -> FeatureVector:
    ids = registry(rec.task, profile)
    base = _BaseValues(rec)
    values = np.empty(len(ids))
    for k, fid in enumerate(ids):
        if fid.base in ("x", "y") or "_imf" in fid.base:
            v = base.coord_measure(fid.base, fid.functional)
        else:
            v = functional(fid.functional, base.series(fid.stream, fid.base))
        values[k] = v if v is not None and np.isfinite(v) else math.nan
    return FeatureVector(rec.subject.id if rec.subject else None, rec.task, ids, values)


# ---------------------------------------------------------------------------
# matrices


LABEL_SIGN = {"PD": 1, "HC": -1}


@dataclass
class FeatureMatrix:
    """Subjects x features.

    ``raw`` keeps NaN for missing entries; ``values`` holds the imputed matrix
    (column medians over the rows present) and ``missing`` the mask.
    """

    subject_ids: List[str]
    labels: List[str]
    sexes: List[str]
    ages: List[int]
    feature_ids: List[str]
    raw: np.ndarray
    values: np.ndarray = field(default=None)
    missing: np.ndarray = field(default=None)

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64).reshape(len(self.subject_ids), len(self.feature_ids))
        if self.missing is None:
            self.missing = np.isnan(self.raw)
        if self.values is None:
            self.values = impute_median(self.raw)

    @property
    def y(self) -> np.ndarray:
        return np.array([LABEL_SIGN[lab] for lab in self.labels], dtype=np.float64)

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    def rows(self, index: Sequence[int]) -> "FeatureMatrix":
        """Subset of rows. Imputed values are kept, not recomputed."""
        index = list(index)
        return FeatureMatrix(
            [self.subject_ids[i] for i in index],
            [self.labels[i] for i in index],
            [self.sexes[i] for i in index],
            [self.ages[i] for i in index],
            list(self.feature_ids),
            self.raw[index],
            self.values[index],
            self.missing[index],
        )

    def columns(self, keys: Sequence[str]) -> "FeatureMatrix":
        pos = {k: i for i, k in enumerate(self.feature_ids)}
        try:
            cols = [pos[k] for k in keys]
        except KeyError as exc:
            raise RegistryError(f"feature {exc.args[0]} not in matrix") from None
        return FeatureMatrix(
            list(self.subject_ids), list(self.labels), list(self.sexes), list(self.ages),
            list(keys), self.raw[:, cols], self.values[:, cols], self.missing[:, cols],
        )

    def column(self, key: str) -> np.ndarray:
        return self.values[:, self.feature_ids.index(key)]

    def to_tsv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        w.writerow(["subject", "label", "sex", "age", *self.feature_ids])
        for i, sid in enumerate(self.subject_ids):
            cells = ["NA" if np.isnan(v) else repr(float(v)) for v in self.raw[i]]
            w.writerow([sid, self.labels[i], self.sexes[i], self.ages[i], *cells])
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, text: str) -> "FeatureMatrix":
        rows = list(csv.reader(io.StringIO(text), delimiter="\t"))
        header, body = rows[0], rows[1:]
        if header[:4] != ["subject", "label", "sex", "age"]:
            raise ValueError("feature matrix header must start with subject, label, sex, age")
        raw = np.array(
            [[math.nan if c == "NA" else float(c) for c in r[4:]] for r in body], dtype=np.float64
        ).reshape(len(body), len(header) - 4)
        return cls(
            [r[0] for r in body], [r[1] for r in body], [r[2] for r in body], [int(r[3]) for r in body],
            header[4:], raw,
        )


def impute_median(raw: np.ndarray, reference: Optional[np.ndarray] = None) -> np.ndarray:
    """Replace NaN with the column median of ``reference`` (default: ``raw``)."""
    ref = raw if reference is None else reference
    out = raw.copy()
    if out.size == 0:
        return out
    with np.errstate(all="ignore"):
        present = ~np.isnan(ref)
        med = np.array([np.median(ref[present[:, j], j]) if present[:, j].any() else 0.0 for j in range(ref.shape[1])])
    nan = np.isnan(out)
    out[nan] = np.take(med, np.nonzero(nan)[1])
    return out


def assemble_matrix(dataset: Dataset, task: int, profile: str = "full") -> FeatureMatrix:
    subjects = dataset.subjects_with_task(task)
    skipped = sorted(set(dataset.subjects) - {s.id for s in subjects})
    if skipped:
        logger.info("task %d: %d subjects without a recording excluded: %s", task, len(skipped), skipped)
    if not subjects:
        raise ValueError(f"task {task}: no subjects with a recording")
    vectors = [build_feature_vector(dataset.recordings[(s.id, task)], profile) for s in subjects]
    keys = [fid.key for fid in vectors[0].ids]
    raw = np.vstack([v.values for v in vectors])
    keep = ~np.all(np.isnan(raw), axis=0)
    if not keep.all():
        dropped = [k for k, ok in zip(keys, keep) if not ok]
        logger.info("task %d: dropping %d all-missing features: %s", task, len(dropped), dropped)
    return FeatureMatrix(
        [s.id for s in subjects],
        [s.label for s in subjects],
        [s.sex for s in subjects],
        [s.age for s in subjects],
        [k for k, ok in zip(keys, keep) if ok],
        raw[:, keep],
    )
