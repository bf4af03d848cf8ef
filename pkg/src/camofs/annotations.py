"""COCO-style annotation files: loading, validation and writing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path


class AnnotationError(ValueError):
    """Malformed or inconsistent annotation data."""


@dataclass
class AnnotationSet:
    """Images, instance annotations and categories, cross-referenced by id.

    Records are kept as the plain dicts found in the file so unknown fields
    survive a load/save round trip.
    """

    images: list[dict]
    annotations: list[dict]
    categories: list[dict]
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        self.image_index = _index(self.images, "image", ("id", "width", "height"))
        self.category_index = _index(self.categories, "category", ("id", "name"))
        self.annotation_index = _index(self.annotations, "annotation",
                                       ("id", "image_id", "category_id", "bbox"))
        for img in self.images:
            if not (img["width"] > 0 and img["height"] > 0):
                raise AnnotationError(f"image {img['id']} has non-positive size")
        for ann in self.annotations:
            aid = ann["id"]
            if ann["image_id"] not in self.image_index:
                raise AnnotationError(f"annotation {aid} refers to unknown image_id {ann['image_id']}")
            if ann["category_id"] not in self.category_index:
                raise AnnotationError(
                    f"annotation {aid} refers to unknown category_id {ann['category_id']}")
            bbox = ann["bbox"]
            if len(bbox) != 4 or not all(math.isfinite(float(v)) for v in bbox):
                raise AnnotationError(f"annotation {aid} has a malformed bbox {bbox}")
            if bbox[2] < 0 or bbox[3] < 0:
                raise AnnotationError(f"annotation {aid} has negative bbox extent {bbox}")
            if "area" in ann and not ann["area"] >= 0:
                raise AnnotationError(f"annotation {aid} has negative area {ann['area']}")
            if ann.get("iscrowd", 0) not in (0, 1):
                raise AnnotationError(f"annotation {aid} has iscrowd={ann['iscrowd']}")

    # convenience views
    def area(self, ann: dict) -> float:
        if "area" in ann:
            return float(ann["area"])
        return float(ann["bbox"][2]) * float(ann["bbox"][3])

    def annotations_by_image(self) -> dict[int, list[dict]]:
        out: dict[int, list[dict]] = {img["id"]: [] for img in self.images}
        for ann in self.annotations:
            out[ann["image_id"]].append(ann)
        return out

    def annotations_by_category(self) -> dict[int, list[dict]]:
        out: dict[int, list[dict]] = {cat["id"]: [] for cat in self.categories}
        for ann in self.annotations:
            out[ann["category_id"]].append(ann)
        return out

    def category_ids(self) -> list[int]:
        return sorted(self.category_index)

    def resolve_categories(self, items) -> set[int]:
        """Map category ids or names to ids."""
        by_name = {c["name"]: c["id"] for c in self.categories}
        out = set()
        for item in items:
            if isinstance(item, str) and not item.lstrip("-").isdigit():
                if item not in by_name:
                    raise AnnotationError(f"unknown category name {item!r}")
                out.add(by_name[item])
            else:
                cid = int(item)
                if cid not in self.category_index:
                    raise AnnotationError(f"unknown category id {cid}")
                out.add(cid)
        return out

    def to_dict(self) -> dict:
        doc = dict(self.extra)
        doc.update(images=self.images, annotations=self.annotations, categories=self.categories)
        return doc

    def subset(self, annotation_ids) -> "AnnotationSet":
        """Annotations with the given ids, their images, and all categories."""
        keep = set(annotation_ids)
        anns = [a for a in self.annotations if a["id"] in keep]
        img_ids = {a["image_id"] for a in anns}
        imgs = [i for i in self.images if i["id"] in img_ids]
        return AnnotationSet(imgs, anns, list(self.categories), dict(self.extra))


def _index(records: list[dict], kind: str, required: tuple[str, ...]) -> dict:
    index = {}
    for rec in records:
        missing = [k for k in required if k not in rec]
        if missing:
            raise AnnotationError(f"{kind} record {rec.get('id', '?')} lacks {', '.join(missing)}")
        if rec["id"] in index:
            raise AnnotationError(f"duplicate {kind} id {rec['id']}")
        index[rec["id"]] = rec
    return index


def from_dict(doc: dict) -> AnnotationSet:
    if not isinstance(doc, dict):
        raise AnnotationError("annotation document must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise AnnotationError(f"annotation document lacks a '{key}' list")
    extra = {k: v for k, v in doc.items() if k not in ("images", "annotations", "categories")}
    return AnnotationSet(doc["images"], doc["annotations"], doc["categories"], extra)


def load_annotations(path) -> AnnotationSet:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"annotation file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(doc)


def dumps(annset: AnnotationSet) -> str:
    return json.dumps(annset.to_dict(), indent=None, separators=(",", ":"))


def save_annotations(annset: AnnotationSet, path) -> None:
    Path(path).write_text(dumps(annset))
