import json

import numpy as np
import pytest
from conftest import tiny_set

from camofs.annotations import AnnotationSet
from camofs.stats import (center_bias, center_bin, class_counts, instance_histogram,
                          read_center_bias, read_resolutions, summary, write_stats)
from camofs.synthetic import make_annotation_set


def test_histogram_direct_count():
    h = instance_histogram(tiny_set([1, 1, 2, 5]))
    assert h.counts == {"1": 2, "2": 1, "3": 0, "3+": 1}
    assert h.total == 4
    assert abs(sum(h.ratios.values()) - 100.0) <= 0.1


def test_histogram_skips_unannotated_images():
    s = tiny_set([1, 3])
    s.images.append({"id": 99, "width": 10, "height": 10, "file_name": "e.jpg"})
    s.validate()
    assert instance_histogram(s).counts == {"1": 1, "2": 0, "3": 1, "3+": 0}


@pytest.mark.parametrize("grid", [64, 63, 1])
def test_centered_instance_lands_in_central_bin(grid):
    s = AnnotationSet([{"id": 1, "width": 100, "height": 80, "file_name": "a.jpg"}],
                      [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [40, 30, 20, 20],
                        "area": 400.0, "iscrowd": 0}],
                      [{"id": 1, "name": "a"}])
    g = center_bias(s, grid)
    assert g.total == 1
    assert list(zip(*np.nonzero(g.bins))) == [(grid // 2, grid // 2)]


def test_center_bin_rule():
    assert center_bin(0.5, 64) == 32
    assert center_bin(0.0, 64) == 0
    assert center_bin(1.0, 64) == 63
    assert center_bin(0.4999, 64) == 31


def test_synthetic_500_matches_manifest(tmp_path):
    annset, manifest = make_annotation_set(num_images=500, seed=2)
    h = instance_histogram(annset)
    want = {"1": 0, "2": 0, "3": 0, "3+": 0}
    for n in manifest["instances_per_image"].values():
        want[str(n) if n <= 3 else "3+"] += 1
    assert h.counts == want
    assert center_bias(annset).total == manifest["num_instances"]
    assert center_bias(annset).bins.sum() == manifest["num_instances"]


def test_write_stats_round_trip(tmp_path):
    annset, manifest = make_annotation_set(num_images=50, seed=5)
    summ = write_stats(annset, tmp_path, grid=16)
    assert summ["num_images"] == 50 and summ["num_instances"] == manifest["num_instances"]
    hist = json.loads((tmp_path / "instance_histogram.json").read_text())
    assert hist["counts"] == instance_histogram(annset).counts
    grid = read_center_bias(tmp_path / "center_bias.csv")
    assert grid.bins.shape == (16, 16)
    assert np.array_equal(grid.bins, center_bias(annset, 16).bins)
    assert read_resolutions(tmp_path / "resolution.csv") == [(i["width"], i["height"])
                                                            for i in annset.images]
    assert json.loads((tmp_path / "summary.json").read_text()) == summary(annset)


def test_class_counts(synth47):
    annset, manifest = synth47
    rows = class_counts(annset)
    assert {r["category_id"]: r["instances"] for r in rows} == manifest["instances_per_class"]
