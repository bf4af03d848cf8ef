"""Dataset statistics: instances per image, center bias, resolutions, class counts."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import AnnotationSet

HISTOGRAM_KEYS = ("1", "2", "3", "3+")


@dataclass
class InstanceHistogram:
    counts: dict[str, int]
    ratios: dict[str, float]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_dict(self) -> dict:
        return {"counts": self.counts, "ratios": self.ratios, "total_images": self.total}


@dataclass
class CenterBiasGrid:
    bins: np.ndarray  # G x G, rows follow y, columns follow x
    total: int

    @property
    def size(self) -> int:
        return self.bins.shape[0]


def instance_histogram(annset: AnnotationSet) -> InstanceHistogram:
    """Images bucketed by instance count (1, 2, 3, more than 3); unannotated images are skipped."""
    counts = dict.fromkeys(HISTOGRAM_KEYS, 0)
    for anns in annset.annotations_by_image().values():
        n = len(anns)
        if n == 0:
            continue
        counts[str(n) if n <= 3 else "3+"] += 1
    total = sum(counts.values())
    ratios = {k: (100.0 * v / total if total else 0.0) for k, v in counts.items()}
    return InstanceHistogram(counts, ratios)


def center_bin(center: float, grid: int) -> int:
    """floor(center * grid), clamped to the grid; the midpoint 0.5 lands in bin grid // 2."""
    return min(max(int(math.floor(center * grid)), 0), grid - 1)


def center_bias(annset: AnnotationSet, grid: int = 64) -> CenterBiasGrid:
    """Histogram of bbox centers in normalized image coordinates."""
    if grid < 1:
        raise ValueError("grid must be >= 1")
    bins = np.zeros((grid, grid), dtype=np.int64)
    for ann in annset.annotations:
        img = annset.image_index[ann["image_id"]]
        x, y, w, h = (float(v) for v in ann["bbox"])
        cx, cy = (x + w / 2) / img["width"], (y + h / 2) / img["height"]
        bins[center_bin(cy, grid), center_bin(cx, grid)] += 1
    return CenterBiasGrid(bins, int(bins.sum()))


def resolutions(annset: AnnotationSet) -> list[tuple[int, int]]:
    return [(img["width"], img["height"]) for img in annset.images]


def class_counts(annset: AnnotationSet) -> list[dict]:
    """Images and instances per category."""
    rows = []
    for cid, anns in sorted(annset.annotations_by_category().items()):
        rows.append({
            "category_id": cid,
            "name": annset.category_index[cid]["name"],
            "images": len({a["image_id"] for a in anns}),
            "instances": len(anns),
        })
    return rows


def summary(annset: AnnotationSet) -> dict:
    annotated = sum(1 for a in annset.annotations_by_image().values() if a)
    n_img, n_inst = len(annset.images), len(annset.annotations)
    return {
        "num_images": n_img,
        "num_instances": n_inst,
        "num_annotated_images": annotated,
        "num_categories": len(annset.categories),
        "instances_per_image": n_inst / n_img if n_img else 0.0,
    }


def write_stats(annset: AnnotationSet, out_dir, grid: int = 64) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summ = summary(annset)
    hist = instance_histogram(annset)
    (out / "instance_histogram.json").write_text(
        json.dumps({**hist.to_dict(), "total_instances": summ["num_instances"]}, indent=2))
    (out / "summary.json").write_text(json.dumps(summ, indent=2))
    np.savetxt(out / "center_bias.csv", center_bias(annset, grid).bins, fmt="%d", delimiter=",")
    with open(out / "resolution.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["width", "height"])
        writer.writerows(resolutions(annset))
    with open(out / "class_counts.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["category_id", "name", "images", "instances"])
        writer.writeheader()
        writer.writerows(class_counts(annset))
    return summ


def read_center_bias(path) -> CenterBiasGrid:
    bins = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    return CenterBiasGrid(bins, int(bins.sum()))


def read_resolutions(path) -> list[tuple[int, int]]:
    with open(path, newline="") as fh:
        return [(int(r["width"]), int(r["height"])) for r in csv.DictReader(fh)]
