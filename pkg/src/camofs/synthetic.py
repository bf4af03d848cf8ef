"""Synthetic annotation files with a known manifest, for demos and tests."""

from __future__ import annotations

import numpy as np

from .annotations import AnnotationSet


def make_annotation_set(
    num_images: int = 100,
    num_classes: int = 47,
    seed: int = 0,
    max_instances: int = 6,
    size_range: tuple[int, int] = (64, 640),
):
    """Random images with integer rectangle instances.

    Returns ``(annset, manifest)`` where the manifest records the generator's
    own counts: instances per image, instances per class, totals.
    """
    rng = np.random.default_rng(seed)
    images, anns = [], []
    per_image, per_class = {}, {c: 0 for c in range(1, num_classes + 1)}
    ann_id = 1
    for img_id in range(1, num_images + 1):
        w, h = (int(v) for v in rng.integers(size_range[0], size_range[1] + 1, size=2))
        images.append({"id": img_id, "width": w, "height": h, "file_name": f"{img_id:06d}.jpg"})
        n = int(min(rng.geometric(0.6), max_instances))
        per_image[img_id] = n
        for _ in range(n):
            cid = int(rng.integers(1, num_classes + 1))
            bw, bh = int(rng.integers(1, w // 2 + 1)), int(rng.integers(1, h // 2 + 1))
            x, y = int(rng.integers(0, w - bw + 1)), int(rng.integers(0, h - bh + 1))
            poly = [x, y, x + bw, y, x + bw, y + bh, x, y + bh]
            anns.append({
                "id": ann_id, "image_id": img_id, "category_id": cid,
                "bbox": [x, y, bw, bh], "segmentation": [poly],
                "area": float(bw * bh), "iscrowd": 0,
            })
            per_class[cid] += 1
            ann_id += 1
    cats = [{"id": c, "name": f"class_{c:02d}"} for c in range(1, num_classes + 1)]
    manifest = {
        "num_images": num_images,
        "num_instances": len(anns),
        "instances_per_image": per_image,
        "instances_per_class": per_class,
    }
    return AnnotationSet(images, anns, cats), manifest
