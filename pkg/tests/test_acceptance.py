"""End-to-end acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (printed in the pytest terminal
summary by ``conftest.py``) and then asserts the same condition at the stated
tolerance.
"""

import itertools
import json
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import dual_value, exact_p_enumeration, kkt_violation, qp_oracle
from inkpd import _kernels, emd, measures, svm
from inkpd.cli import main
from inkpd.cohorts import CohortScheme, evaluate_scheme
from inkpd.features import FeatureMatrix, assemble_matrix
from inkpd.ink_data import load_dataset, read_manifest
from inkpd.selection import (
    CLEAN, DESCENDING, RANDOM, ProtocolCache, ProtocolConfig, evaluate_protocol, forward_accumulate,
    rank_features, stratified_split,
)
from inkpd.stats import mann_whitney_u
from inkpd.svm import COUNTERS, ConfusionCounts, GridSpec, metrics, stratified_kfold
from inkpd.synth import preset, synth_generate

RESULTS = []


def verdict(k, ok, detail):
    line = f"CRITERION {k} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------


def test_c1_rank_sum_oracle():
    t0 = time.perf_counter()
    worst_exact, cases = 0.0, 0
    for n in range(2, 13):
        for n1 in range(1, n):
            # one arrangement per achievable U: rank i goes to sample a when chosen
            seen = set()
            for idx in itertools.combinations(range(n), n1):
                chosen = set(idx)
                a = [float(i) for i in idx]
                b = [float(i) for i in range(n) if i not in chosen]
                u = sum(x > y for x in a for y in b)
                if u in seen:
                    continue
                seen.add(u)
                p = mann_whitney_u(a, b).p_value
                worst_exact = max(worst_exact, abs(p - exact_p_enumeration(a, b)))
                cases += 1
    worst_normal = 0.0
    for idx in itertools.combinations(range(12), 6):
        chosen = set(idx)
        a = [float(i) for i in idx]
        b = [float(i) for i in range(12) if i not in chosen]
        exact = mann_whitney_u(a, b).p_value
        approx = mann_whitney_u(a, b, exact_max_n=0).p_value
        worst_normal = max(worst_normal, abs(exact - approx))
    dt = time.perf_counter() - t0
    verdict(1, worst_exact <= 1e-12 and worst_normal <= 0.02 and dt < 10,
            f"{cases} exact cases max|dp|={worst_exact:.2e} (<=1e-12); 924 arrangements at 6/6 "
            f"max|normal-exact|={worst_normal:.4f} (<=0.02); {dt:.1f}s (<10s)")


def test_c2_smo_matches_qp_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_rel, worst_kkt, problems = 0.0, 0.0, 0
    c_lo, c_hi = min(svm.C_GRID), max(svm.C_GRID)
    while problems < 200:
        n, d = int(rng.integers(2, 9)), int(rng.integers(1, 4))
        X = rng.standard_normal((n, d))
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        y[0], y[1] = 1.0, -1.0
        z = float(rng.choice(svm.Z_GRID))
        K = svm.kernel_matrix(X, X, z)
        Q = K * np.outer(y, y)
        for c in (c_lo, c_hi):
            a_or = qp_oracle(Q, y, c)
            a_smo = _kernels.smo(K, y, c, svm.SMO_TOL, 100_000)[0]
            v_or, v_smo = dual_value(Q, a_or), dual_value(Q, a_smo)
            worst_rel = max(worst_rel, abs(v_smo - v_or) / abs(v_or))
            worst_kkt = max(worst_kkt, kkt_violation(Q, y, a_smo, c))
            problems += 1
    dt = time.perf_counter() - t0
    verdict(2, worst_rel <= 1e-6 and worst_kkt <= 1e-3 and dt < 30,
            f"{problems} problems (C in {{{c_lo}, {c_hi}}}) max rel dual gap={worst_rel:.2e} (<=1e-6); "
            f"max KKT={worst_kkt:.2e} (<=1e-3); {dt:.1f}s (<30s)")


def test_c3_emd_reconstruction_and_separation():
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(50, 1000))
        if i % 2:
            s = rng.uniform(-1, 1, n)
        else:
            t = np.arange(n) / n
            s = sum(rng.uniform(0, 0.5) * np.sin(2 * np.pi * rng.uniform(1, 60) * t + rng.uniform(0, 6)) for _ in range(3))
            s = s + 0.1 * rng.standard_normal(n)
        imfs = emd.decompose(s)
        worst = max(worst, float(np.max(np.abs(s - imfs.reconstruct()))))
    t = np.arange(1000) / 1000
    hi = np.sin(2 * np.pi * 50 * t)
    imf1 = emd.decompose(hi + np.sin(2 * np.pi * 5 * t)).imfs[0]
    rho = float(np.corrcoef(imf1, hi)[0, 1])
    verdict(3, worst < 1e-9 and rho >= 0.95,
            f"100 signals max|s-(sum IMF+r)|={worst:.2e} (<1e-9); two-tone IMF1 corr={rho:.4f} (>=0.95)")


def test_c4_measure_closed_forms():
    uniform = (np.arange(160) // 10).astype(float)
    h = measures.shannon_entropy(uniform)
    r2 = measures.renyi_from_probs([0.5, 0.5], 2)
    A = 2.5
    psi = measures.teager_kaiser(A * np.sin(0.2 * np.arange(500)))
    tke_err = float(np.max(np.abs(psi / (A ** 2 * np.sin(0.2) ** 2) - 1)))
    ce = measures.conventional_energy([1, 2, 3])
    ok = abs(h - 4) <= 1e-12 and abs(r2 - 1) <= 1e-12 and tke_err <= 0.01 and ce == 14
    verdict(4, ok, f"Shannon={h!r} (4 +-1e-12); Renyi2={r2!r} (1); TKE max rel err={tke_err:.2e} (<=1%); CE={ce!r} (14)")


def test_c5_metric_formulas():
    m = metrics(ConfusionCounts(tp=9, fp=1, tn=8, fn=2))
    got = (round(m.accuracy, 2), round(m.precision, 2), round(m.recall, 2))
    ok = m.accuracy == 85.0 and m.precision == 90.0 and got[2] == 81.82
    verdict(5, ok, f"accuracy/precision/recall = {got[0]:.2f} / {got[1]:.2f} / {got[2]:.2f} (85.00 / 90.00 / 81.82)")


def test_c6_protocol_counters():
    rng = np.random.default_rng(6)
    y = np.r_[np.ones(20), -np.ones(20)]
    X = (y[:, None] * 0.8 + rng.standard_normal((40, 2)))
    cfg = ProtocolConfig()
    COUNTERS.clear()
    evaluate_protocol(X, y, cfg, base_seed=0)
    reps = COUNTERS["repetitions"]
    cells = COUNTERS["grid_cells"] / COUNTERS["grid_searches"]
    folds = COUNTERS["cv_folds"] / COUNTERS["grid_searches"]
    test_share = COUNTERS["test_rows"] / (COUNTERS["test_rows"] + COUNTERS["train_rows"])
    # stratification of split and folds
    strat = True
    for r in range(reps):
        tr, te = stratified_split(y, cfg.test_fraction, r)
        strat &= (y[te] > 0).sum() == 4 and (y[te] < 0).sum() == 4
        f = stratified_kfold(y[tr], cfg.grid.folds, r)
        pos = np.bincount(f[y[tr] > 0], minlength=10)
        strat &= pos.max() - pos.min() <= 1
    ok = reps == 50 and cells == 143 and folds == 10 and abs(test_share - 0.2) < 1e-12 and strat
    verdict(6, ok, f"{int(cells)} grid cells/rep, {int(folds)} stratified folds, {reps} repetitions, "
                   f"test share {test_share:.2f} (80:20), stratified={bool(strat)}")


def _fixture_matrix(name):
    with tempfile.TemporaryDirectory() as d:
        return assemble_matrix(load_dataset(read_manifest(synth_generate(preset(name), d))), 1, "compact")


def test_c7_synthetic_cohort_claim():
    t0 = time.perf_counter()
    # leak-free protocol: the chance-level oracle for the null fixture assumes
    # feature selection never sees the test split
    cfg = ProtocolConfig(leak_mode=CLEAN, max_curve_features=10)
    effect = evaluate_scheme(_fixture_matrix("female-tremor"), CohortScheme("Sex"), cfg, base_seed=0)
    null = evaluate_scheme(_fixture_matrix("null"), CohortScheme("Sex"), cfg, base_seed=0)
    dt = time.perf_counter() - t0
    fem, comb = effect.group("Female").accuracy, effect.group("Combined").accuracy
    null_acc = {g.name: g.accuracy for g in null.rows()}
    ok = fem - comb >= 5 and all(abs(a - 50) <= 10 for a in null_acc.values()) and dt < 600
    verdict(7, ok, f"effect: Female {fem:.2f} vs Combined {comb:.2f} (diff {fem - comb:+.2f} >= 5); null: "
                   + ", ".join(f"{k} {v:.2f}" for k, v in null_acc.items()) + f" (50 +-10); {dt:.0f}s (<600s)")


def _informative(seed, n_per=20, n_noise=4):
    rng = np.random.default_rng(seed)
    y = np.r_[np.ones(n_per), -np.ones(n_per)]
    cols = [y * 1.2 + rng.standard_normal(2 * n_per), y * 0.8 + rng.standard_normal(2 * n_per)]
    cols += [rng.standard_normal(2 * n_per) for _ in range(n_noise)]
    keys = [f"T1:OnSurface:f{j}:mean" for j in range(len(cols))]
    n = 2 * n_per
    return FeatureMatrix([f"S{i:02d}" for i in range(n)], ["PD" if v > 0 else "HC" for v in y], ["Male"] * n,
                         [60] * n, keys, np.column_stack(cols))


def test_c8_descending_beats_random():
    cfg = ProtocolConfig(repetitions=10)
    wins, detail = 0, []
    for seed in range(10):
        m = _informative(seed)
        cache = ProtocolCache()
        desc = rank_features(m, DESCENDING, seed, cfg, cache=cache)
        rand = rank_features(m, RANDOM, seed, cfg)
        best_d = max(p[1] for p in forward_accumulate(m, desc, seed, cfg, DESCENDING, cache).points)
        best_r = max(p[1] for p in forward_accumulate(m, rand, seed, cfg, RANDOM, cache).points)
        wins += best_d >= best_r
        detail.append(f"{best_d:.1f}/{best_r:.1f}")
    verdict(8, wins >= 9, f"descending max >= random max in {wins}/10 seeds (>=9) [{' '.join(detail)}]")


def _pipeline(root: Path):
    fast = ["--reps", "3", "--max-features", "3", "--seed", "5"]
    steps = [
        ["synth", "--preset", "female-tremor", "--seed", "5", "--out", root / "synth"],
        ["extract", "--manifest", root / "synth" / "manifest.txt", "--task", "1", "--registry", "compact",
         "--out", root / "feat"],
        ["filter", "--features", root / "feat" / "features_T1.tsv", "--out", root / "filt"],
        ["rank", "--features", root / "filt" / "filtered_T1.tsv", *fast, "--out", root / "rank"],
        ["train", "--features", root / "filt" / "filtered_T1.tsv", "--ranking", root / "rank" / "ranking.tsv",
         "--n", "2", *fast, "--out", root / "train"],
        ["evaluate", "--features", root / "feat" / "features_T1.tsv", "--scheme", "sex", *fast, "--out", root / "eval"],
        ["evaluate", "--features", root / "feat" / "features_T1.tsv", "--scheme", "sex", "--leak-mode", "clean",
         *fast, "--out", root / "eval_clean"],
        ["report", "--inputs", root / "eval", root / "eval_clean", "--out", root / "report"],
    ]
    for s in steps:
        assert main([str(a) for a in s]) == 0, s
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c9_pipeline_determinism(tmp_path):
    a = _pipeline(tmp_path / "run1")
    b = _pipeline(tmp_path / "run2")
    same = a == b
    # the on-disk evaluate stage equals the in-process run
    m = FeatureMatrix.from_tsv((tmp_path / "run1" / "feat" / "features_T1.tsv").read_text())
    cfg = ProtocolConfig(repetitions=3, max_curve_features=3)
    inproc = evaluate_scheme(m, CohortScheme("Sex"), cfg, base_seed=5).to_jsonl()
    composable = inproc.encode() == a["eval/report.jsonl"]
    diff = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    verdict(9, same and composable, f"{len(a)} artifacts across 8 stage runs; byte-identical={same} "
                                    f"(differing: {diff or 'none'}); on-disk evaluate == in-process={composable}")
