import json
from pathlib import Path

import numpy as np
import pytest

from inkpd.cli import main
from inkpd.ink_data import load_dataset, read_manifest
from inkpd.synth import SynthConfig, preset, subjects_for, synth_generate

FAST = ["--reps", "2", "--folds", "3", "--max-features", "2"]


def tree_bytes(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_is_byte_identical(tmp_path):
    cfg = SynthConfig({("PD", "Male", "Young"): 2, ("HC", "Male", "Young"): 2}, {"Male": {"tremor": 1.0}}, seed=9,
                      tasks=(1, 3))
    synth_generate(cfg, tmp_path / "a")
    synth_generate(cfg, tmp_path / "b")
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b and len(a) == 1 + 4 * 2
    ds = load_dataset(read_manifest(tmp_path / "a" / "manifest.txt"))
    assert ds.label_tally() == {"PD": 2, "HC": 2} and len(ds.recordings) == 8
    rec = next(iter(ds.recordings.values()))
    assert set(np.unique(rec.button)) == {0.0, 1.0}
    np.testing.assert_allclose(np.diff(rec.t), 1 / 150)


def test_synth_config_validation_and_presets():
    with pytest.raises(ValueError):
        SynthConfig({("PD", "Male", "Young"): 1}, {"Male": {"charisma": 1.0}})
    with pytest.raises(ValueError):
        preset("nope")
    subs = subjects_for(preset("female-tremor"))
    assert len(subs) == 80
    assert sum(s.label == "PD" for s, _ in subs) == 40
    assert sum(s.sex == "Female" and s.age >= 65 for s, _ in subs) == 20
    assert set(subs[0][1]) == {"tremor", "pressure", "tempo"}


@pytest.fixture(scope="module")
def features(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    assert main(["synth", "--preset", "female-tremor", "--seed", "3", "--out", str(root / "synth")]) == 0
    assert main(["extract", "--manifest", str(root / "synth" / "manifest.txt"), "--task", "1", "--registry",
                 "compact", "--out", str(root / "feat")]) == 0
    return root, root / "feat" / "features_T1.tsv"


def test_filter_grid_shapes(features):
    root, f = features
    assert main(["filter", "--features", str(f), "--out", str(root / "filt")]) == 0
    grid = (root / "filt" / "pass_counts_sex_age.tsv").read_text().splitlines()
    assert grid[0].split("\t") == ["task", "Combined", "Male", "Female", "Old", "Young"]
    assert len(grid) == 2 and grid[1].startswith("1\t")
    four = (root / "filt" / "pass_counts_sexage.tsv").read_text().splitlines()
    assert four[0].split("\t")[1:] == ["OldFemale", "YoungFemale", "OldMale", "YoungMale"]
    counts = dict(zip(grid[0].split("\t"), grid[1].split("\t")))
    assert int(counts["Female"]) > int(counts["Male"])


def test_evaluate_sex_rows_and_provenance(features):
    root, f = features
    args = ["evaluate", "--features", str(f), "--scheme", "sex", "--seed", "1", *FAST]
    assert main([*args, "--out", str(root / "ev1")]) == 0
    rows = [json.loads(l) for l in (root / "ev1" / "report.jsonl").read_text().splitlines()]
    assert {r["group"] for r in rows} == {"Male", "Female", "Combined"}
    assert all(r["leak_mode"] == "paper" for r in rows)
    prov = json.loads((root / "ev1" / "provenance.json").read_text())
    assert prov["stage"] == "evaluate" and "features_T1.tsv" in prov["inputs"]
    assert set(prov["outputs"]) == {"report.jsonl", "comparison.tsv", "bars.tsv", "curves.tsv"}
    assert main([*args, "--out", str(root / "ev2")]) == 0
    assert tree_bytes(root / "ev1") == tree_bytes(root / "ev2")


def test_rank_train_report(features):
    root, f = features
    assert main(["rank", "--features", str(f), "--group", "Female", *FAST, "--out", str(root / "rk")]) == 0
    ranking = (root / "rk" / "ranking.tsv").read_text().splitlines()
    assert len(ranking) > 2
    assert main(["train", "--features", str(f), "--ranking", str(root / "rk" / "ranking.tsv"), "--n", "2",
                 "--group", "Female", *FAST, "--out", str(root / "tr")]) == 0
    model = json.loads((root / "tr" / "model.json").read_text())
    assert len(model["features"]) == 2
    assert main(["evaluate", "--features", str(f), "--scheme", "combined", *FAST, "--out", str(root / "ev3")]) == 0
    assert main(["report", "--inputs", str(root / "ev3"), "--out", str(root / "rep")]) == 0
    summary = (root / "rep" / "summary.tsv").read_text().splitlines()
    assert summary[0].startswith("scheme\tleak_mode\tgroup") and summary[1].split("\t")[2] == "Combined"


def test_failure_writes_error_record(tmp_path, capsys):
    code = main(["extract", "--manifest", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "o")])
    assert code == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["stage"] == "extract" and err["error"] and err["message"]
    assert json.loads((tmp_path / "o" / "error.json").read_text()) == err
