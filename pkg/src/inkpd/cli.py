"""Command-line driver: ``inkpd <stage> [options]``.

Stages and their outputs (all plain text, under ``--out``):

``synth``     ``manifest.txt`` + ``rec/*.txt``
``extract``   ``features_T<k>.tsv`` per task
``filter``    ``pass_counts_sex_age.tsv`` (Combined/Male/Female/Old/Young),
              ``pass_counts_sexage.tsv`` (OldFemale/YoungFemale/OldMale/YoungMale),
              ``pvalues.tsv``, ``filtered_T<k>.tsv``
``rank``      ``ranking.tsv``, ``curve.tsv``
``train``     ``model.json``
``evaluate``  ``report.jsonl``, ``comparison.tsv``, ``bars.tsv``, ``curves.tsv``
``report``    ``summary.tsv``, ``bars.tsv``, ``curves.tsv`` merged from evaluate runs

Each stage also writes ``provenance.json`` (stage, configuration, seed and
sha256 digests of inputs and outputs). A failure exits nonzero and prints a
JSON error record on stderr (also saved as ``error.json`` when possible).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from inkpd import __version__, svm
from inkpd.cohorts import CohortScheme, combine_tasks, evaluate_scheme, partition
from inkpd.features import FeatureMatrix, assemble_matrix
from inkpd.ink_data import load_dataset, read_manifest
from inkpd.selection import (
    DESCENDING, ProtocolCache, ProtocolConfig, _best_p, format_curve, forward_accumulate, rank_features,
)
from inkpd.stats import filter_features, format_pass_counts
from inkpd.synth import preset, synth_generate

logger = logging.getLogger("inkpd")

SEX_AGE_GROUPS = ("Combined", "Male", "Female", "Old", "Young")
FOUR_WAY_GROUPS = ("OldFemale", "YoungFemale", "OldMale", "YoungMale")


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.05
    scheme: str = "combined"
    order: str = DESCENDING
    folds: int = 10
    reps: int = 50
    split: float = 0.2
    leak_mode: str = "paper"
    c_grid: tuple = svm.C_GRID
    z_grid: tuple = svm.Z_GRID
    max_features: Optional[int] = None
    age_threshold: float = 65
    seed: int = 0

    def protocol(self) -> ProtocolConfig:
        return ProtocolConfig(
            repetitions=self.reps, test_fraction=self.split,
            grid=svm.GridSpec(tuple(self.c_grid), tuple(self.z_grid), self.folds),
            alpha=self.alpha, leak_mode=self.leak_mode, max_curve_features=self.max_features,
        )


class StageError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# file helpers


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _digests(paths: Sequence[Path], root: Optional[Path] = None) -> Dict[str, str]:
    out = {}
    for p in sorted(set(Path(p) for p in paths)):
        name = p.relative_to(root).as_posix() if root is not None else p.name
        out[name] = sha256(p)
    return out


def write_provenance(out: Path, stage: str, config: Dict, inputs: Sequence[Path], outputs: Sequence[Path]) -> None:
    doc = {
        "stage": stage,
        "version": __version__,
        "config": config,
        "inputs": _digests(inputs),
        "outputs": _digests(outputs, out),
    }
    atomic_write(out / "provenance.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _read_matrices(paths: Sequence[str]) -> FeatureMatrix:
    mats = [FeatureMatrix.from_tsv(Path(p).read_text()) for p in paths]
    return mats[0] if len(mats) == 1 else combine_tasks(mats)


def _tasks(spec: str) -> List[int]:
    if spec == "all":
        return list(range(1, 8))
    tasks = sorted({int(t) for t in spec.split(",")})
    if any(not 1 <= t <= 7 for t in tasks):
        raise StageError(f"tasks must be in 1..7, got {spec}")
    return tasks


def _group_rows(m: FeatureMatrix, group: Optional[str], age_threshold: float) -> FeatureMatrix:
    if group is None or group == "Combined":
        return m
    for kind in ("Sex", "Age", "SexAge"):
        scheme = CohortScheme(kind, age_threshold)
        if group in scheme.groups:
            ids = set(partition(m, scheme)[group])
            return m.rows([i for i, s in enumerate(m.subject_ids) if s in ids])
    raise StageError(f"unknown group {group!r}")


def _run_config(args) -> RunConfig:
    return RunConfig(
        alpha=args.alpha, scheme=args.scheme, order=args.order, folds=args.folds, reps=args.reps,
        split=args.split, leak_mode=args.leak_mode, max_features=args.max_features,
        age_threshold=args.age_threshold, seed=args.seed,
    )


# ---------------------------------------------------------------------------
# stages


def stage_synth(args) -> List[Path]:
    out = Path(args.out)
    cfg = preset(args.preset, seed=args.seed, tasks=tuple(_tasks(args.task)))
    manifest = synth_generate(cfg, out)
    outputs = [manifest] + sorted((out / "rec").glob("*.txt"))
    write_provenance(out, "synth", {"preset": args.preset, "seed": args.seed, "tasks": list(cfg.tasks)}, [], outputs)
    return [manifest]


def stage_extract(args) -> List[Path]:
    out = Path(args.out)
    manifest = read_manifest(args.manifest)
    dataset = load_dataset(manifest)
    outputs = []
    for task in _tasks(args.task):
        if not dataset.subjects_with_task(task):
            logger.warning("task %d: no recordings, skipped", task)
            continue
        m = assemble_matrix(dataset, task, args.registry)
        outputs.append(atomic_write(out / f"features_T{task}.tsv", m.to_tsv()))
    if not outputs:
        raise StageError("no task produced a feature matrix")
    inputs = [Path(args.manifest)] + [manifest.root / p for p in manifest.paths.values()]
    write_provenance(out, "extract", {"task": args.task, "registry": args.registry}, inputs, outputs)
    return outputs


def stage_filter(args) -> List[Path]:
    out = Path(args.out)
    counts_a: Dict[int, Dict[str, object]] = {}
    counts_b: Dict[int, Dict[str, object]] = {}
    plines = ["task\tgroup\tfeature\tu\tp_value"]
    outputs = []
    for path in args.features:
        m = FeatureMatrix.from_tsv(Path(path).read_text())
        task = int(m.feature_ids[0].split(":", 1)[0][1:])
        for groups, counts in ((SEX_AGE_GROUPS, counts_a), (FOUR_WAY_GROUPS, counts_b)):
            counts[task] = {}
            for g in groups:
                sub = _group_rows(m, g, args.age_threshold)
                if np.unique(sub.y).size < 2:
                    counts[task][g] = "NA"
                    continue
                fr = filter_features(sub, args.alpha)
                counts[task][g] = fr.pass_count
                for key in sub.feature_ids:
                    r = fr.results[key]
                    plines.append(f"{task}\t{g}\t{key}\t{r.u_statistic!r}\t{r.p_value!r}")
        fr = filter_features(m, args.alpha)
        keep = fr.selected or [_best_p(m, args.alpha)]
        outputs.append(atomic_write(out / f"filtered_T{task}.tsv", m.columns(keep).to_tsv()))
    outputs.append(atomic_write(out / "pass_counts_sex_age.tsv", format_pass_counts(counts_a, SEX_AGE_GROUPS)))
    outputs.append(atomic_write(out / "pass_counts_sexage.tsv", format_pass_counts(counts_b, FOUR_WAY_GROUPS)))
    outputs.append(atomic_write(out / "pvalues.tsv", "\n".join(plines) + "\n"))
    write_provenance(out, "filter", {"alpha": args.alpha, "age_threshold": args.age_threshold},
                     [Path(p) for p in args.features], outputs)
    return outputs


def stage_rank(args) -> List[Path]:
    out = Path(args.out)
    rc = _run_config(args)
    m = _group_rows(_read_matrices(args.features), args.group, args.age_threshold)
    config = rc.protocol()
    fr = filter_features(m, rc.alpha)
    passed = fr.selected or [_best_p(m, rc.alpha)]
    cache = ProtocolCache()
    ranked = rank_features(m, rc.order, rc.seed, config, features=passed, cache=cache)
    curve = forward_accumulate(m, ranked, rc.seed, config, rc.order, cache)
    lines = ["rank\tfeature\tindividual_accuracy"]
    lines += [f"{r.rank}\t{r.feature}\t{'NA' if r.individual_accuracy is None else repr(r.individual_accuracy)}" for r in ranked]
    outputs = [
        atomic_write(out / "ranking.tsv", "\n".join(lines) + "\n"),
        atomic_write(out / "curve.tsv", format_curve(curve, args.group or "Combined")),
    ]
    write_provenance(out, "rank", {**asdict(rc), "group": args.group}, [Path(p) for p in args.features], outputs)
    return outputs


def stage_train(args) -> List[Path]:
    out = Path(args.out)
    rc = _run_config(args)
    m = _group_rows(_read_matrices(args.features), args.group, args.age_threshold)
    keys = list(m.feature_ids)
    if args.ranking:
        rows = Path(args.ranking).read_text().splitlines()[1:]
        keys = [r.split("\t")[1] for r in rows if r.strip()]
    if args.n is not None:
        keys = keys[:args.n]
    X = m.columns(keys).values
    g = svm.grid_search(X, m.y, rc.protocol().grid, rc.seed, tol=rc.protocol().cv_tol)
    model = svm.train_smo(X, m.y, g.best_c, g.best_z)
    doc = json.loads(model.to_json())
    doc["features"] = keys
    doc["cv_accuracy"] = g.best_accuracy
    outputs = [atomic_write(out / "model.json", json.dumps(doc, indent=1) + "\n")]
    inputs = [Path(p) for p in args.features] + ([Path(args.ranking)] if args.ranking else [])
    write_provenance(out, "train", {**asdict(rc), "group": args.group, "n": args.n}, inputs, outputs)
    return outputs


def stage_evaluate(args) -> List[Path]:
    out = Path(args.out)
    rc = _run_config(args)
    if args.features:
        m = _read_matrices(args.features)
        inputs = [Path(p) for p in args.features]
    elif args.manifest:
        manifest = read_manifest(args.manifest)
        dataset = load_dataset(manifest)
        m = combine_tasks([assemble_matrix(dataset, t, args.registry) for t in _tasks(args.task)])
        inputs = [Path(args.manifest)] + [manifest.root / p for p in manifest.paths.values()]
    else:
        raise StageError("evaluate needs --features or --manifest")
    scheme = CohortScheme.parse(rc.scheme, rc.age_threshold)
    report = evaluate_scheme(m, scheme, rc.protocol(), rc.seed, workers=args.workers)
    outputs = [
        atomic_write(out / "report.jsonl", report.to_jsonl()),
        atomic_write(out / "comparison.tsv", report.comparison_table()),
        atomic_write(out / "bars.tsv", report.bar_data()),
        atomic_write(out / "curves.tsv", report.curves()),
    ]
    write_provenance(out, "evaluate", asdict(rc), inputs, outputs)
    return outputs


def stage_report(args) -> List[Path]:
    out = Path(args.out)
    records, curves, inputs = [], [], []
    for d in args.inputs:
        d = Path(d)
        rpath = d / "report.jsonl"
        if not rpath.is_file():
            raise StageError(f"{d}: no report.jsonl (run evaluate first)")
        inputs.append(rpath)
        records += [json.loads(line) for line in rpath.read_text().splitlines() if line.strip()]
        cpath = d / "curves.tsv"
        if cpath.is_file():
            inputs.append(cpath)
            curves += cpath.read_text().splitlines()[1:]

    def fmt(v):
        return "NA" if v is None else f"{v:.2f}"

    lines = ["scheme\tleak_mode\tgroup\tn_pd\tn_hc\taccuracy\tprecision\trecall\taccuracy_std"]
    bars = ["scheme\tleak_mode\tgroup\tmean_acc\tstd_acc"]
    for r in records:
        lines.append(f"{r['scheme']}\t{r['leak_mode']}\t{r['group']}\t{r['n_pd']}\t{r['n_hc']}\t"
                     f"{fmt(r['accuracy'])}\t{fmt(r['precision'])}\t{fmt(r['recall'])}\t{fmt(r['accuracy_std'])}")
        if r["accuracy"] is not None:
            bars.append(f"{r['scheme']}\t{r['leak_mode']}\t{r['group']}\t{r['accuracy']!r}\t{r['accuracy_std']!r}")
    outputs = [
        atomic_write(out / "summary.tsv", "\n".join(lines) + "\n"),
        atomic_write(out / "bars.tsv", "\n".join(bars) + "\n"),
        atomic_write(out / "curves.tsv", "\n".join(["n\tmean_acc\tstd_acc\torder\tcohort"] + curves) + "\n"),
    ]
    write_provenance(out, "report", {"inputs": [Path(d).name for d in args.inputs]}, inputs, outputs)
    return outputs


STAGES = {
    "synth": stage_synth, "extract": stage_extract, "filter": stage_filter, "rank": stage_rank,
    "train": stage_train, "evaluate": stage_evaluate, "report": stage_report,
}


# ---------------------------------------------------------------------------
# argument parsing


def _protocol_flags(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--scheme", choices=("combined", "sex", "age", "sexage"), default=d.scheme)
    p.add_argument("--order", choices=("descending", "random"), default=d.order)
    p.add_argument("--folds", type=int, default=d.folds)
    p.add_argument("--reps", type=int, default=d.reps)
    p.add_argument("--split", type=float, default=d.split, help="test fraction (default 0.2 = 80:20)")
    p.add_argument("--leak-mode", choices=("paper", "clean"), default=d.leak_mode)
    p.add_argument("--max-features", type=int, default=None, help="cap on the accumulation curve length")
    p.add_argument("--age-threshold", type=float, default=d.age_threshold)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inkpd", description="Handwriting PD/HC feature pipeline")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="stage", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic cohort")
    p.add_argument("--preset", default="female-tremor", choices=("female-tremor", "null", "table2"))
    p.add_argument("--task", default="1")

    p = sub.add_parser("extract", help="manifest -> feature matrices")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", default="all")
    p.add_argument("--registry", choices=("full", "compact"), default="full")

    p = sub.add_parser("filter", help="Mann-Whitney pass counts and reduced matrices")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--age-threshold", type=float, default=65)

    for name, hlp in (("rank", "rank features and trace the accumulation curve"), ("train", "fit one SVM")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--features", nargs="+", required=True)
        p.add_argument("--group", default=None, help="restrict to one group, e.g. Female or OldMale")
        _protocol_flags(p)
        if name == "train":
            p.add_argument("--ranking", default=None, help="ranking.tsv; features are taken in its order")
            p.add_argument("--n", type=int, default=None, help="use the first n features")

    p = sub.add_parser("evaluate", help="cohort scheme report")
    p.add_argument("--features", nargs="+", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--task", default="1")
    p.add_argument("--registry", choices=("full", "compact"), default="full")
    p.add_argument("--workers", type=int, default=1)
    _protocol_flags(p)

    p = sub.add_parser("report", help="merge evaluate outputs into tables")
    p.add_argument("--inputs", nargs="+", required=True)

    for p in sub.choices.values():
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        outputs = STAGES[args.stage](args)
    except Exception as exc:  # every failure becomes a machine-readable record
        record = {"stage": args.stage, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        try:
            atomic_write(Path(args.out) / "error.json", json.dumps(record, sort_keys=True) + "\n")
        except OSError:
            pass
        if args.verbose:
            logger.exception("stage %s failed", args.stage)
        return 1
    for p in outputs:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
