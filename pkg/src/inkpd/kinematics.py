"""Kinematic series from pen trajectories.

Derivatives are forward differences over the (nonuniform) timestamps and are
taken inside each stroke only; a stream concatenates the per-stroke results
of every stroke of one kind.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from inkpd import _kernels
from inkpd.ink_data import IN_AIR, ON_SURFACE, Recording, Stroke, segment_strokes


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelSeries:
    values: np.ndarray
    timestamps: np.ndarray
    channel_tag: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        t = np.asarray(self.timestamps, dtype=np.float64)
        if v.shape != t.shape or v.ndim != 1:
            raise ValueError(f"{self.channel_tag}: values/timestamps shape mismatch {v.shape} vs {t.shape}")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError(f"{self.channel_tag}: timestamps must be strictly increasing")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "timestamps", t)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class DirectionCounts:
    ncv: int
    nca: int
    duration: float
    relative_ncv: float
    relative_nca: float


def derivative(s: ChannelSeries, tag: str | None = None) -> ChannelSeries:
    """Forward difference; output sits at interval midpoints and is one shorter."""
    if len(s) < 2:
        raise DegenerateInputError(f"derivative needs >= 2 samples, got {len(s)}")
    dt = np.diff(s.timestamps)
    d = np.diff(s.values) / dt
    mid = s.timestamps[:-1] + 0.5 * dt
    return ChannelSeries(d, mid, tag if tag is not None else f"d({s.channel_tag})")


def trajectory_speed(x_vel: ChannelSeries, y_vel: ChannelSeries) -> ChannelSeries:
    if len(x_vel) != len(y_vel) or not np.array_equal(x_vel.timestamps, y_vel.timestamps):
        raise ValueError("velocity components are not aligned")
    return ChannelSeries(np.hypot(x_vel.values, y_vel.values), x_vel.timestamps, "speed")


def count_direction_changes(values: np.ndarray) -> int:
    """Sign changes of the first difference; zero differences are skipped."""
    return _kernels.sign_changes(values)


def direction_counts(vel: ChannelSeries, acc: ChannelSeries, duration: float) -> DirectionCounts:
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    ncv = count_direction_changes(vel.values)
    nca = count_direction_changes(acc.values)
    return DirectionCounts(ncv, nca, duration, ncv / duration, nca / duration)


def pressure_rate(p: ChannelSeries) -> ChannelSeries:
    return derivative(p, "pressure_rate")


# ---------------------------------------------------------------------------
# per-stream assembly

KINEMATIC_BASES = ("speed", "vx", "vy", "acc", "ax", "ay", "jerk", "jx", "jy")


@dataclass
class StreamKinematics:
    """Kinematic series of one stream, each a list of per-stroke arrays."""

    kind: str
    pieces: Dict[str, List[np.ndarray]]
    duration: float
    n_strokes: int

    def series(self, base: str) -> np.ndarray:
        parts = self.pieces.get(base, [])
        return np.concatenate(parts) if parts else np.empty(0)

    def direction_changes(self, base: str) -> int:
        return sum(count_direction_changes(p) for p in self.pieces.get(base, []))


def _stroke_kinematics(rec: Recording, st: Stroke) -> Dict[str, np.ndarray]:
    t = rec.t[st.start:st.stop]
    out: Dict[str, np.ndarray] = {}
    if t.size < 2:
        return out
    x = ChannelSeries(rec.x[st.start:st.stop], t, "x")
    y = ChannelSeries(rec.y[st.start:st.stop], t, "y")
    vx = derivative(x, "vx")
    vy = derivative(y, "vy")
    speed = trajectory_speed(vx, vy)
    out.update(vx=vx.values, vy=vy.values, speed=speed.values)
    if st.kind == ON_SURFACE:
        out["pressure_rate"] = pressure_rate(ChannelSeries(rec.pressure[st.start:st.stop], t, "p")).values
    if len(vx) >= 2:
        ax = derivative(vx, "ax")
        ay = derivative(vy, "ay")
        acc = derivative(speed, "acc")
        out.update(ax=ax.values, ay=ay.values, acc=acc.values)
        if len(ax) >= 2:
            out.update(
                jx=derivative(ax).values, jy=derivative(ay).values, jerk=derivative(acc).values
            )
    return out


def stream_kinematics(rec: Recording, kind: str, strokes: List[Stroke] | None = None) -> StreamKinematics:
    if kind not in (ON_SURFACE, IN_AIR):
        raise ValueError(f"unknown stream {kind!r}")
    strokes = segment_strokes(rec) if strokes is None else strokes
    pieces: Dict[str, List[np.ndarray]] = {}
    duration = 0.0
    count = 0
    for st in strokes:
        if st.kind != kind:
            continue
        count += 1
        t = rec.t[st.start:st.stop]
        duration += float(t[-1] - t[0])
        for name, arr in _stroke_kinematics(rec, st).items():
            pieces.setdefault(name, []).append(arr)
    return StreamKinematics(kind, pieces, duration, count)


def stream_samples(rec: Recording, kind: str, strokes: List[Stroke] | None = None) -> Recording:
    """Concatenate all samples of one stream kind, in time order."""
    strokes = segment_strokes(rec) if strokes is None else strokes
    idx = [np.arange(s.start, s.stop) for s in strokes if s.kind == kind]
    sel = np.concatenate(idx) if idx else np.empty(0, dtype=np.int64)
    return Recording(rec.subject, rec.task, rec.data[sel])
