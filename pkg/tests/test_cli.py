import json
import os
import subprocess
import sys

import pytest
from conftest import tiny_set

from camofs.annotations import load_annotations, save_annotations
from camofs.cli import main
from camofs.stats import read_center_bias, read_resolutions
from camofs.synthetic import make_annotation_set


@pytest.fixture
def ann_file(tmp_path):
    annset, _ = make_annotation_set(num_images=120, num_classes=10, seed=1)
    path = tmp_path / "ann.json"
    save_annotations(annset, path)
    return path


def ids(path):
    return {a["id"] for a in json.loads(path.read_text())["annotations"]}


def test_sample_nesting_across_shots(tmp_path, ann_file):
    for k in (5, 3, 1):
        assert main(["sample", "--ann", str(ann_file), "--shots", str(k), "--seed", "4",
                     "--out", str(tmp_path / f"{k}.json")]) == 0
    assert ids(tmp_path / "1.json") <= ids(tmp_path / "3.json") <= ids(tmp_path / "5.json")
    assert ids(tmp_path / "3.json") < ids(tmp_path / "5.json")


def test_sample_novel_subset_and_env_default(tmp_path, ann_file, monkeypatch):
    monkeypatch.setenv("CAMOFS_ANN", str(ann_file))
    out = tmp_path / "n.json"
    assert main(["sample", "--novel-classes", "1,class_02", "--shots", "2", "--out", str(out)]) == 0
    cats = {a["category_id"] for a in load_annotations(out).annotations}
    assert cats <= {1, 2} and len(ids(out)) <= 4


def test_sample_missing_file_names_path(tmp_path, capsys):
    missing = tmp_path / "does_not_exist.json"
    assert main(["sample", "--ann", str(missing), "--out", str(tmp_path / "o.json")]) != 0
    assert str(missing) in capsys.readouterr().err


def test_sample_without_annotation_source(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("CAMOFS_ANN", raising=False)
    assert main(["sample", "--out", str(tmp_path / "o.json")]) != 0
    assert "CAMOFS_ANN" in capsys.readouterr().err


def test_sample_seed_sweep(tmp_path, ann_file):
    for seed in range(100):
        outs = {}
        for k in (1, 2, 3, 5):
            outs[k] = tmp_path / f"s{seed}_{k}.json"
            assert main(["sample", "--ann", str(ann_file), "--shots", str(k), "--seed", str(seed),
                         "--out", str(outs[k])]) == 0
        assert ids(outs[1]) <= ids(outs[2]) <= ids(outs[3]) <= ids(outs[5])


def _eval(tmp_path, gt, dets, capsys):
    save_annotations(gt, tmp_path / "gt.json")
    (tmp_path / "dets.json").write_text(json.dumps(dets))
    rc = main(["eval", "--ann", str(tmp_path / "gt.json"), "--dets", str(tmp_path / "dets.json"),
               "--iou-type", "bbox", "--out", str(tmp_path / "res.json")])
    assert rc == 0
    capsys.readouterr()
    return json.loads((tmp_path / "res.json").read_text())


def test_eval_perfect_and_empty(tmp_path, capsys):
    gt = tiny_set([1])
    box = gt.annotations[0]["bbox"]
    res = _eval(tmp_path, gt, [{"image_id": 1, "category_id": 1, "score": 1.0, "bbox": box}], capsys)
    assert abs(res["ap"] - 1.0) <= 1e-9
    assert _eval(tmp_path, gt, [], capsys)["ap"] == 0.0


def test_eval_envelope_fixture(tmp_path, capsys):
    gt = tiny_set([1])
    dets = [{"image_id": 1, "category_id": 1, "score": 0.9, "bbox": [60, 60, 10, 10]},
            {"image_id": 1, "category_id": 1, "score": 0.8, "bbox": [0, 0, 10, 6]}]
    assert abs(_eval(tmp_path, gt, dets, capsys)["ap50"] - 0.5) <= 1e-9


def test_eval_segm(tmp_path, capsys):
    gt = tiny_set([2])
    dets = [{"image_id": 1, "category_id": 1, "score": 0.5, "bbox": a["bbox"],
             "segmentation": a["segmentation"]} for a in gt.annotations]
    save_annotations(gt, tmp_path / "gt.json")
    (tmp_path / "d.json").write_text(json.dumps(dets))
    assert main(["eval", "--ann", str(tmp_path / "gt.json"), "--dets", str(tmp_path / "d.json"),
                 "--iou-type", "segm", "--out", str(tmp_path / "r.json")]) == 0
    assert abs(json.loads((tmp_path / "r.json").read_text())["ap"] - 1.0) <= 1e-9


def test_stats_outputs(tmp_path, ann_file):
    out = tmp_path / "stats"
    assert main(["stats", "--ann", str(ann_file), "--out-dir", str(out)]) == 0
    for name in ("instance_histogram.json", "center_bias.csv", "resolution.csv", "summary.json"):
        assert (out / name).is_file()
    annset = load_annotations(ann_file)
    assert read_center_bias(out / "center_bias.csv").total == len(annset.annotations)
    assert len(read_resolutions(out / "resolution.csv")) == len(annset.images)


def test_stats_deterministic(tmp_path, ann_file):
    for d in ("a", "b"):
        main(["stats", "--ann", str(ann_file), "--out-dir", str(tmp_path / d)])
    for name in ("instance_histogram.json", "center_bias.csv", "resolution.csv", "class_counts.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_toy_train_writes_report(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "triplet-only", "steps": 5}))
    assert main(["toy-train", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    doc = json.loads((tmp_path / "run" / "train_report.json").read_text())
    assert "loss_ratio" in doc and len(doc["loss"]) == 5
    assert (tmp_path / "run" / "loss_trace.csv").is_file()


def test_gradcheck_default_and_impossible(capsys):
    assert main(["gradcheck", "--trials", "10"]) == 0
    assert "trials=10 failures=0" in capsys.readouterr().out
    assert main(["gradcheck", "--trials", "3", "--tolerance", "0"]) != 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "camofs", "gradcheck", "--trials", "2"],
                          capture_output=True, text=True, env=os.environ.copy())
    assert proc.returncode == 0 and "failures=0" in proc.stdout
