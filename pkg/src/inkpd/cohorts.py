"""Cohort schemes and per-group evaluation.

Every group runs the same pipeline as the whole cohort (filter, rank,
forward accumulation, protocol metrics); only the subject subset differs.
Group seeds are ``base_seed + crc32(group name)`` so results do not depend on
the order, or the process, in which groups are evaluated.
"""

from __future__ import annotations

import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from inkpd.features import FeatureMatrix
from inkpd.ink_data import Dataset
from inkpd.selection import (
    CLEAN, DESCENDING, AccuracyCurve, ProtocolCache, ProtocolConfig, _best_p, evaluate_clean,
    format_curve, forward_accumulate, rank_features,
)
from inkpd.stats import filter_features

logger = logging.getLogger(__name__)

COMBINED = "Combined"
SCHEME_KINDS = ("Combined", "Sex", "Age", "SexAge")
GROUPS = {
    "Combined": ("Combined",),
    "Sex": ("Male", "Female"),
    "Age": ("Young", "Old"),
    "SexAge": ("YoungMale", "OldMale", "YoungFemale", "OldFemale"),
}
MIN_PER_LABEL = 2


class CohortError(ValueError):
    pass


@dataclass(frozen=True)
class CohortScheme:
    kind: str = "Combined"
    age_threshold: float = 65

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"scheme kind must be one of {SCHEME_KINDS}")

    @classmethod
    def parse(cls, name: str, age_threshold: float = 65) -> "CohortScheme":
        """Case-insensitive ``combined|sex|age|sexage``."""
        table = {k.lower(): k for k in SCHEME_KINDS}
        try:
            return cls(table[name.lower()], age_threshold)
        except KeyError:
            raise ValueError(f"unknown scheme {name!r}") from None

    @property
    def groups(self) -> Tuple[str, ...]:
        return GROUPS[self.kind]

    def group_of(self, sex: str, age: float) -> str:
        band = "Old" if age >= self.age_threshold else "Young"
        if self.kind == "Combined":
            return COMBINED
        if self.kind == "Sex":
            return sex
        if self.kind == "Age":
            return band
        return band + sex


def _metas(source) -> List[Tuple[str, str, float]]:
    if isinstance(source, FeatureMatrix):
        return list(zip(source.subject_ids, source.sexes, source.ages))
    if isinstance(source, Dataset):
        source = [source.subjects[k] for k in sorted(source.subjects)]
    return [(s.id, s.sex, s.age) for s in source]


def partition(source, scheme: CohortScheme) -> Dict[str, List[str]]:
    """Group name -> subject ids (input order); every subject lands in exactly one group."""
    out: Dict[str, List[str]] = {g: [] for g in scheme.groups}
    for sid, sex, age in _metas(source):
        out[scheme.group_of(sex, age)].append(sid)
    return out


def group_seed(base_seed: int, name: str) -> int:
    return (int(base_seed) + zlib.crc32(name.encode())) % (2 ** 31)


@dataclass
class GroupResult:
    name: str
    n_pd: int
    n_hc: int
    accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    accuracy_std: Optional[float] = None
    n_passed: Optional[int] = None
    features: List[str] = field(default_factory=list)
    curve: Optional[AccuracyCurve] = field(default=None, repr=False)
    skipped: Optional[str] = None

    @property
    def evaluated(self) -> bool:
        return self.skipped is None

    def record(self, scheme: str) -> Dict:
        return {
            "scheme": scheme, "group": self.name, "n_pd": self.n_pd, "n_hc": self.n_hc,
            "accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
            "accuracy_std": self.accuracy_std, "n_passed": self.n_passed,
            "n_features": len(self.features), "features": self.features, "skipped": self.skipped,
        }


@dataclass
class CohortReport:
    scheme: CohortScheme
    groups: List[GroupResult]  # one per scheme group, evaluated or skipped
    baseline: Optional[GroupResult] = None  # Combined, when the scheme is not Combined
    leak_mode: str = "paper"

    def rows(self) -> List[GroupResult]:
        return ([self.baseline] if self.baseline is not None else []) + self.groups

    def group(self, name: str) -> GroupResult:
        for g in self.rows():
            if g.name == name:
                return g
        raise KeyError(name)

    def to_jsonl(self) -> str:
        out = []
        for g in self.rows():
            rec = g.record(self.scheme.kind)
            rec["leak_mode"] = self.leak_mode
            out.append(json.dumps(rec, sort_keys=True) + "\n")
        return "".join(out)

    def comparison_table(self) -> str:
        """Group x (counts, accuracy, precision, recall, std) in percent, tab separated."""
        def fmt(v):
            return "NA" if v is None else f"{v:.2f}"
        lines = ["group\tn_pd\tn_hc\taccuracy\tprecision\trecall\taccuracy_std\tstatus"]
        for g in self.rows():
            status = "ok" if g.evaluated else "skipped"
            lines.append(f"{g.name}\t{g.n_pd}\t{g.n_hc}\t{fmt(g.accuracy)}\t{fmt(g.precision)}\t{fmt(g.recall)}\t{fmt(g.accuracy_std)}\t{status}")
        return "\n".join(lines) + "\n"

    def bar_data(self) -> str:
        lines = ["group\tmean_acc\tstd_acc"]
        lines += [f"{g.name}\t{g.accuracy!r}\t{g.accuracy_std!r}" for g in self.rows() if g.evaluated]
        return "\n".join(lines) + "\n"

    def curves(self) -> str:
        """All group curves in one table (``format_curve`` rows, single header)."""
        lines = ["n\tmean_acc\tstd_acc\torder\tcohort"]
        for g in self.rows():
            if g.curve is not None:
                lines += format_curve(g.curve, g.name).splitlines()[1:]
        return "\n".join(lines) + "\n"


def _viability(m: FeatureMatrix) -> Optional[str]:
    n_pd, n_hc = int(np.sum(m.y > 0)), int(np.sum(m.y < 0))
    if n_pd < MIN_PER_LABEL or n_hc < MIN_PER_LABEL:
        return f"class imbalance: {n_pd} PD / {n_hc} HC (need >= {MIN_PER_LABEL} each)"
    return None


def evaluate_group(m: FeatureMatrix, name: str, config: ProtocolConfig = ProtocolConfig(), base_seed: int = 0) -> GroupResult:
    """Filter -> descending ranking -> forward accumulation on one subject subset.

    Paper mode reports the protocol metrics at the best point of the curve;
    clean mode reselects inside every repetition (see ``evaluate_clean``).
    """
    n_pd, n_hc = int(np.sum(m.y > 0)), int(np.sum(m.y < 0))
    reason = _viability(m)
    if reason is not None:
        logger.warning("group %s skipped: %s", name, reason)
        return GroupResult(name, n_pd, n_hc, skipped=reason)
    seed = group_seed(base_seed, name)
    if config.leak_mode == CLEAN:
        res = evaluate_clean(m, config, seed)
        met = res.protocol.metrics
        return GroupResult(name, n_pd, n_hc, met.accuracy, met.precision, met.recall, res.protocol.std,
                           None, [], res.test_curve)
    fr = filter_features(m, config.alpha)
    passed = fr.selected or [_best_p(m, config.alpha)]
    cache = ProtocolCache()
    ranked = rank_features(m, DESCENDING, seed, config, features=passed, cache=cache)
    curve = forward_accumulate(m, ranked, seed, config, DESCENDING, cache)
    n = curve.best_n
    best = curve.results[n - 1]
    met = best.metrics
    return GroupResult(name, n_pd, n_hc, met.accuracy, met.precision, met.recall, best.std,
                       fr.pass_count, [r.feature for r in ranked[:n]], curve)


def _group_job(args):
    m, name, config, base_seed = args
    return evaluate_group(m, name, config, base_seed)


def evaluate_scheme(m: FeatureMatrix, scheme: CohortScheme, config: ProtocolConfig = ProtocolConfig(),
                    base_seed: int = 0, workers: int = 1) -> CohortReport:
    """Evaluate every group of ``scheme`` plus the Combined baseline.

    Groups without at least two subjects of each label are reported as
    skipped. ``workers > 1`` evaluates groups in separate processes; results
    are identical to the serial run.
    """
    parts = partition(m, scheme)
    index = {sid: i for i, sid in enumerate(m.subject_ids)}
    jobs = [(m.rows([index[s] for s in parts[g]]), g, config, base_seed) for g in scheme.groups]
    if scheme.kind != "Combined":
        jobs.append((m, COMBINED, config, base_seed))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_group_job, jobs))
    else:
        results = [_group_job(j) for j in jobs]
    groups = results[:len(scheme.groups)]
    baseline = results[len(scheme.groups)] if scheme.kind != "Combined" else None
    if not any(g.evaluated for g in groups):
        raise CohortError(f"no viable group under scheme {scheme.kind}")
    return CohortReport(scheme, groups, baseline, config.leak_mode)


def combine_tasks(matrices: Sequence[FeatureMatrix]) -> FeatureMatrix:
    """Side-by-side join of per-task matrices on their common subjects."""
    if not matrices:
        raise ValueError("no matrices")
    common = set(matrices[0].subject_ids)
    for mat in matrices[1:]:
        common &= set(mat.subject_ids)
    order = [s for s in matrices[0].subject_ids if s in common]
    if not order:
        raise ValueError("matrices share no subjects")
    parts = []
    for mat in matrices:
        pos = {s: i for i, s in enumerate(mat.subject_ids)}
        parts.append(mat.rows([pos[s] for s in order]))
    first = parts[0]
    keys = [k for p in parts for k in p.feature_ids]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate feature keys across matrices")
    return FeatureMatrix(
        list(first.subject_ids), list(first.labels), list(first.sexes), list(first.ages), keys,
        np.hstack([p.raw for p in parts]), np.hstack([p.values for p in parts]),
    )
