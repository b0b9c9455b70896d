"""Digitizer recordings, subject metadata, manifests and stroke segmentation.

Recording files are plain text: one sample per line, whitespace separated,
``#`` starts a comment line. Channels default to the order
``x y t button pressure tilt elevation``; a column map reorders them.

Manifest grammar (``key = value`` lines, then two tables)::

    # inkpd manifest
    columns = x y t button pressure tilt elevation
    time_scale = 1.0            # seconds per timestamp unit in the files
    [subjects]
    id  age sex label updrs     # header line is required
    S01 70  F   PD    2.5       # updrs may be '-' when unknown
    [recordings]
    subject task path           # paths relative to the manifest directory
    S01     1    rec/S01_t1.txt

``sex`` accepts ``M``/``F``/``Male``/``Female``; ``label`` accepts ``PD``/``HC``.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

CHANNELS = ("x", "y", "t", "button", "pressure", "tilt", "elevation")
DEFAULT_COLUMN_MAP = {name: i for i, name in enumerate(CHANNELS)}

ON_SURFACE = "OnSurface"
IN_AIR = "InAir"


class ParseError(ValueError):
    """Malformed recording or manifest text."""


class RecordingValidationError(ValueError):
    """Recording text parsed but violates a sample invariant."""


class DatasetLoadError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplePoint:
    x: float
    y: float
    t: float
    button: int
    pressure: float
    tilt: float
    elevation: float


@dataclass(frozen=True)
class SubjectMeta:
    id: str
    age: int
    sex: str  # "Male" | "Female"
    label: str  # "PD" | "HC"
    updrs: Optional[float] = None

    def __post_init__(self):
        if not 1 <= self.age <= 130:
            raise ValueError(f"subject {self.id}: age {self.age} outside [1, 130]")
        if self.sex not in ("Male", "Female"):
            raise ValueError(f"subject {self.id}: sex must be Male or Female, got {self.sex!r}")
        if self.label not in ("PD", "HC"):
            raise ValueError(f"subject {self.id}: label must be PD or HC, got {self.label!r}")


@dataclass(frozen=True, eq=False)
class Recording:
    """One subject x task recording, stored column-wise.

    ``data`` has shape ``(n, 7)`` with columns in :data:`CHANNELS` order.
    """

    subject: Optional[SubjectMeta]
    task: int
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64).reshape(-1, len(CHANNELS))
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __len__(self):
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.subject == other.subject
            and self.task == other.task
            and np.array_equal(self.data, other.data)
        )

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, CHANNELS.index(name)]

    @property
    def x(self):
        return self.channel("x")

    @property
    def y(self):
        return self.channel("y")

    @property
    def t(self):
        return self.channel("t")

    @property
    def button(self):
        return self.channel("button")

    @property
    def pressure(self):
        return self.channel("pressure")

    @property
    def samples(self) -> List[SamplePoint]:
        return [
            SamplePoint(r[0], r[1], r[2], int(r[3]), r[4], r[5], r[6]) for r in self.data.tolist()
        ]

    def slice(self, start: int, stop: int) -> "Recording":
        return Recording(self.subject, self.task, self.data[start:stop])


@dataclass(frozen=True)
class Stroke:
    kind: str  # ON_SURFACE | IN_AIR
    start: int
    stop: int  # exclusive

    def __len__(self):
        return self.stop - self.start


def _validate(data: np.ndarray, line_numbers: Sequence[int]) -> None:
    if not np.all(np.isfinite(data)):
        row = int(np.argwhere(~np.isfinite(data))[0, 0])
        raise RecordingValidationError(f"line {line_numbers[row]}: non-finite value")
    button = data[:, 3]
    bad = np.flatnonzero((button != 0) & (button != 1))
    if bad.size:
        raise RecordingValidationError(
            f"line {line_numbers[bad[0]]}: button value {button[bad[0]]:g} not in {{0, 1}}"
        )
    neg = np.flatnonzero(data[:, 4] < 0)
    if neg.size:
        raise RecordingValidationError(f"line {line_numbers[neg[0]]}: negative pressure")
    t = data[:, 2]
    if t.size > 1:
        nonincr = np.flatnonzero(np.diff(t) <= 0)
        if nonincr.size:
            k = nonincr[0] + 1
            raise RecordingValidationError(
                f"line {line_numbers[k]}: timestamp {t[k]:g} not strictly increasing"
            )


def parse_recording(
    text: str,
    column_map: Optional[Mapping[str, int]] = None,
    *,
    time_scale: float = 1.0,
    subject: Optional[SubjectMeta] = None,
    task: int = 1,
) -> Recording:
    """Parse recording text into a :class:`Recording`.

    ``column_map`` maps every channel name to its 0-based column in the file.
    Timestamps are multiplied by ``time_scale`` to obtain seconds.
    """
    cmap = dict(DEFAULT_COLUMN_MAP if column_map is None else column_map)
    missing = [c for c in CHANNELS if c not in cmap]
    if missing:
        raise ParseError(f"column map lacks channels: {', '.join(missing)}")
    order = [cmap[c] for c in CHANNELS]
    width = max(order) + 1
    rows = []
    line_numbers = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) < width:
            raise ParseError(f"line {lineno}: expected {width} columns, found {len(tokens)}")
        try:
            values = [float(tok) for tok in tokens]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric token ({exc})") from None
        rows.append([values[k] for k in order])
        line_numbers.append(lineno)
    data = np.array(rows, dtype=np.float64).reshape(-1, len(CHANNELS))
    _validate(data, line_numbers)
    data[:, 2] *= time_scale
    return Recording(subject, task, data)


def serialize_recording(rec: Recording, column_map: Optional[Mapping[str, int]] = None, time_scale: float = 1.0) -> str:
    """Inverse of :func:`parse_recording` (``repr`` floats, so round trips are exact)."""
    cmap = dict(DEFAULT_COLUMN_MAP if column_map is None else column_map)
    width = max(cmap.values()) + 1
    out = ["# " + " ".join(sorted(cmap, key=cmap.get))]
    for row in rec.data.tolist():
        cols = ["0"] * width
        for k, name in enumerate(CHANNELS):
            v = row[k] / time_scale if name == "t" else row[k]
            cols[cmap[name]] = str(int(v)) if name == "button" else repr(v)
        out.append(" ".join(cols))
    return "\n".join(out) + "\n"


def segment_strokes(rec: Recording) -> List[Stroke]:
    """Split into maximal runs of constant button value."""
    button = rec.button
    n = button.shape[0]
    if n == 0:
        return []
    cuts = np.flatnonzero(np.diff(button) != 0) + 1
    starts = np.concatenate(([0], cuts))
    stops = np.concatenate((cuts, [n]))
    return [
        Stroke(ON_SURFACE if button[a] == 1 else IN_AIR, int(a), int(b))
        for a, b in zip(starts, stops)
    ]


# ---------------------------------------------------------------------------
# manifests and datasets


@dataclass
class DatasetManifest:
    subjects: List[SubjectMeta]
    paths: Dict[Tuple[str, int], Path]
    column_map: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_COLUMN_MAP))
    time_scale: float = 1.0
    root: Path = Path(".")

    def __post_init__(self):
        ids = [s.id for s in self.subjects]
        dup = {i for i in ids if ids.count(i) > 1}
        if dup:
            raise ParseError(f"duplicate subject ids: {sorted(dup)}")
        known = set(ids)
        for sid, task in self.paths:
            if sid not in known:
                raise ParseError(f"recording for unknown subject {sid!r}")
            if not 1 <= task <= 7:
                raise ParseError(f"subject {sid}: task {task} outside 1..7")


_SEX = {"m": "Male", "male": "Male", "f": "Female", "female": "Female"}


def parse_manifest(text: str, root: os.PathLike | str = ".") -> DatasetManifest:
    section = None
    header: Optional[List[str]] = None
    column_map = dict(DEFAULT_COLUMN_MAP)
    time_scale = 1.0
    subjects: List[SubjectMeta] = []
    paths: Dict[Tuple[str, int], Path] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("subjects", "recordings"):
                raise ParseError(f"manifest line {lineno}: unknown section [{section}]")
            header = None
            continue
        if section is None:
            if "=" not in line:
                raise ParseError(f"manifest line {lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "columns":
                names = value.split()
                if sorted(names) != sorted(CHANNELS):
                    raise ParseError(f"manifest line {lineno}: columns must list all of {CHANNELS}")
                column_map = {name: i for i, name in enumerate(names)}
            elif key == "time_scale":
                time_scale = float(value)
            else:
                raise ParseError(f"manifest line {lineno}: unknown key {key!r}")
            continue
        tokens = line.split()
        if header is None:
            header = [tok.lower() for tok in tokens]
            continue
        row = dict(zip(header, tokens))
        try:
            if section == "subjects":
                updrs = row.get("updrs", "-")
                subjects.append(
                    SubjectMeta(
                        id=row["id"],
                        age=int(row["age"]),
                        sex=_SEX[row["sex"].lower()],
                        label=row["label"].upper(),
                        updrs=None if updrs in ("-", "NA", "") else float(updrs),
                    )
                )
            else:
                key = (row["subject"], int(row["task"]))
                if key in paths:
                    raise ParseError(f"manifest line {lineno}: duplicate entry {key}")
                paths[key] = Path(row["path"])
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"manifest line {lineno}: {exc}") from None
    return DatasetManifest(subjects, paths, column_map, time_scale, Path(root))


def read_manifest(path: os.PathLike | str) -> DatasetManifest:
    path = Path(path)
    return parse_manifest(path.read_text(), root=path.parent)


def format_manifest(manifest: DatasetManifest) -> str:
    cols = " ".join(sorted(manifest.column_map, key=manifest.column_map.get))
    lines = [
        "# inkpd manifest",
        f"columns = {cols}",
        f"time_scale = {manifest.time_scale!r}",
        "[subjects]",
        "id age sex label updrs",
    ]
    for s in manifest.subjects:
        updrs = "-" if s.updrs is None else repr(s.updrs)
        lines.append(f"{s.id} {s.age} {s.sex[0]} {s.label} {updrs}")
    lines += ["[recordings]", "subject task path"]
    for (sid, task), p in sorted(manifest.paths.items()):
        lines.append(f"{sid} {task} {p.as_posix()}")
    return "\n".join(lines) + "\n"


@dataclass
class Dataset:
    subjects: Dict[str, SubjectMeta]
    recordings: Dict[Tuple[str, int], Recording]

    def tasks_of(self, subject_id: str) -> List[int]:
        return sorted(t for sid, t in self.recordings if sid == subject_id)

    def label_tally(self) -> Dict[str, int]:
        tally = {"PD": 0, "HC": 0}
        for s in self.subjects.values():
            tally[s.label] += 1
        return tally

    def subjects_with_task(self, task: int) -> List[SubjectMeta]:
        return [self.subjects[sid] for sid in sorted(self.subjects) if (sid, task) in self.recordings]


def load_dataset(manifest: DatasetManifest) -> Dataset:
    by_id = {s.id: s for s in manifest.subjects}
    missing = [
        (sid, task) for (sid, task), p in sorted(manifest.paths.items())
        if not (manifest.root / p).is_file()
    ]
    if missing:
        listing = ", ".join(f"subject {sid} task {task}" for sid, task in missing)
        raise DatasetLoadError(f"missing recording files: {listing}")
    recordings = {}
    for (sid, task), p in sorted(manifest.paths.items()):
        text = (manifest.root / p).read_text()
        try:
            recordings[(sid, task)] = parse_recording(
                text, manifest.column_map, time_scale=manifest.time_scale, subject=by_id[sid], task=task
            )
        except (ParseError, RecordingValidationError) as exc:
            raise DatasetLoadError(f"subject {sid} task {task} ({p}): {exc}") from exc
    subjects = {sid: by_id[sid] for sid in sorted(by_id)}
    for sid in subjects:
        if not any(k[0] == sid for k in recordings):
            logger.warning("subject %s has no recordings", sid)
    return Dataset(subjects, recordings)
