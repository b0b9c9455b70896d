"""Seeded synthetic handwriting cohorts.

Each subject writes with a pen trajectory made of a horizontal drift, two
letter-scale oscillations, a tremor tone and digitizer noise; pressure
carries a slow swell plus a modulation tone. Subject-level latent variables
(standard normal) set tremor amplitude, pressure modulation and writing
tempo. A label effect of size ``d`` shifts the latent of PD subjects in the
named group by ``d`` standard deviations, so group differences reach the
features only through the signal mechanics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Tuple

import numpy as np

from inkpd.ink_data import DatasetManifest, Recording, SubjectMeta, format_manifest, serialize_recording

MECHANISMS = ("tremor", "pressure", "tempo")
AGE_RANGES = {"Young": (36, 64), "Old": (65, 92)}


@dataclass
class SynthConfig:
    """``counts`` maps ``(label, sex, age_band)`` to a subject count, with
    label in PD/HC, sex in Male/Female and band in Young/Old. ``effects`` maps
    a group name (``all``, ``Male``, ``Female``, ``Young``, ``Old`` or a
    ``YoungFemale``-style pair) to ``{mechanism: effect size}``.
    """

    counts: Dict[Tuple[str, str, str], int]
    effects: Dict[str, Dict[str, float]] = field(default_factory=dict)
    noise: float = 0.05
    seed: int = 0
    tasks: Tuple[int, ...] = (1,)
    sample_rate: float = 150.0

    def __post_init__(self):
        for key, n in self.counts.items():
            label, sex, band = key
            if label not in ("PD", "HC") or sex not in ("Male", "Female") or band not in AGE_RANGES:
                raise ValueError(f"bad count key {key}")
            if n < 0:
                raise ValueError("counts must be >= 0")
        for group, eff in self.effects.items():
            for mech, size in eff.items():
                if mech not in MECHANISMS:
                    raise ValueError(f"unknown mechanism {mech!r}")
                if size < 0:
                    raise ValueError("effect sizes must be >= 0")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


def _balanced_counts(per_cell: int) -> Dict[Tuple[str, str, str], int]:
    return {(lab, sex, band): per_cell for lab in ("PD", "HC") for sex in ("Male", "Female") for band in ("Young", "Old")}


def preset(name: str, seed: int = 0, tasks: Tuple[int, ...] = (1,)) -> SynthConfig:
    """Named fixtures: ``female-tremor``, ``null`` (80 subjects each) and
    ``table2`` (the 37 PD / 38 HC sex x age layout, mild female/old effects)."""
    if name == "female-tremor":
        return SynthConfig(_balanced_counts(10), {"Female": {"tremor": 3.0}}, seed=seed, tasks=tasks)
    if name == "null":
        return SynthConfig(_balanced_counts(10), {}, seed=seed, tasks=tasks)
    if name == "table2":
        counts = {
            ("PD", "Male", "Young"): 7, ("PD", "Male", "Old"): 12,
            ("PD", "Female", "Young"): 4, ("PD", "Female", "Old"): 14,
            ("HC", "Male", "Young"): 11, ("HC", "Male", "Old"): 9,
            ("HC", "Female", "Young"): 12, ("HC", "Female", "Old"): 6,
        }
        return SynthConfig(counts, {"Female": {"tremor": 2.0}, "Old": {"pressure": 1.5}}, seed=seed, tasks=tasks)
    raise ValueError(f"unknown preset {name!r}")


def _in_group(group: str, sex: str, band: str) -> bool:
    return group in ("all", sex, band, band + sex)


def subjects_for(cfg: SynthConfig) -> List[Tuple[SubjectMeta, Dict[str, float]]]:
    """Subject metadata and latent variables, in id order."""
    out = []
    idx = 0
    for (label, sex, band) in sorted(cfg.counts):
        for _ in range(cfg.counts[(label, sex, band)]):
            idx += 1
            rng = np.random.default_rng([cfg.seed, idx])
            lo, hi = AGE_RANGES[band]
            age = int(rng.integers(lo, hi + 1))
            latent = {m: float(rng.standard_normal()) for m in MECHANISMS}
            if label == "PD":
                for group, eff in sorted(cfg.effects.items()):
                    if _in_group(group, sex, band):
                        for mech, d in eff.items():
                            latent[mech] += d
            updrs = float(rng.choice([1.0, 2.0, 2.5, 3.0])) if label == "PD" else None
            out.append((SubjectMeta(f"S{idx:03d}", age, sex, label, updrs), latent))
    return out


def synth_recording(subject: SubjectMeta, latent: Mapping[str, float], task: int, cfg: SynthConfig, index: int) -> Recording:
    rng = np.random.default_rng([cfg.seed, index, task])
    fs = cfg.sample_rate
    n_strokes = 3 + task
    segments = []
    for k in range(n_strokes):
        segments.append((1, rng.uniform(0.8, 1.4)))
        if k < n_strokes - 1:
            segments.append((0, rng.uniform(0.25, 0.5)))
    sizes = [max(3, int(round(d * fs))) for _, d in segments]
    button = np.concatenate([np.full(n, b, dtype=np.float64) for (b, _), n in zip(segments, sizes)])
    n = button.size
    t = np.arange(n) / fs

    tempo = math.exp(-0.05 * latent["tempo"])
    f_letter = 2.5 * tempo * math.exp(0.03 * rng.standard_normal())
    size = 150.0 * math.exp(0.05 * rng.standard_normal())
    tremor_amp = 4.0 * math.exp(0.3 * latent["tremor"])
    f_tremor = rng.uniform(8.0, 10.0)
    ph = rng.uniform(0, 2 * math.pi, size=6)

    x = (60.0 * tempo * t + size * np.sin(2 * math.pi * f_letter * t + ph[0])
         + 0.3 * size * np.sin(2 * math.pi * 0.5 * f_letter * t + ph[1])
         + tremor_amp * np.sin(2 * math.pi * f_tremor * t + ph[2])
         + cfg.noise * rng.standard_normal(n) + 5000.0)
    y = (0.8 * size * np.sin(2 * math.pi * 1.3 * f_letter * t + ph[3])
         + tremor_amp * np.cos(2 * math.pi * f_tremor * t + ph[4])
         + cfg.noise * rng.standard_normal(n) + 3000.0)
    p_mod = 15.0 * math.exp(0.35 * latent["pressure"])
    pressure = (600.0 + 120.0 * np.sin(2 * math.pi * 0.6 * t + ph[5])
                + p_mod * np.sin(2 * math.pi * 4.0 * t) + 2.0 * rng.standard_normal(n))
    pressure = np.where(button == 1, np.maximum(pressure, 0.0), 0.0)
    tilt = 40.0 + rng.standard_normal(n)
    elevation = 55.0 + rng.standard_normal(n)
    data = np.column_stack([x, y, t, button, pressure, tilt, elevation])
    return Recording(subject, task, data)


def synth_generate(cfg: SynthConfig, out_dir) -> Path:
    """Write recordings and ``manifest.txt`` under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    (out / "rec").mkdir(parents=True, exist_ok=True)
    paths = {}
    subjects = subjects_for(cfg)
    for idx, (meta, latent) in enumerate(subjects, start=1):
        for task in cfg.tasks:
            rec = synth_recording(meta, latent, task, cfg, idx)
            rel = Path("rec") / f"{meta.id}_t{task}.txt"
            _atomic_write(out / rel, serialize_recording(rec))
            paths[(meta.id, task)] = rel
    manifest = DatasetManifest([m for m, _ in subjects], paths, root=out)
    target = out / "manifest.txt"
    _atomic_write(target, format_manifest(manifest))
    return target


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
