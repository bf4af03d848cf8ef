"""COCO-style AP/AR evaluation for boxes and instance masks.

Follows the reference COCO protocol: IoU thresholds 0.50:0.05:0.95, 101 recall
points with the monotone precision envelope, greedy score-ordered matching,
per-image detection caps of 1/10/100 and area ranges split at 32**2 and 96**2
pixels. Categories without reference instances get -1 and are left out of
averages.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .annotations import AnnotationError, AnnotationSet
from .masks import bbox_iou_matrix, mask_iou_matrix, to_mask

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
RECALL_THRESHOLDS = np.linspace(0.0, 1.0, 101)
MAX_DETS = (1, 10, 100)
AREA_RANGES = {
    "all": (0.0, 1e10),
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, 1e10),
}
UNDEFINED = -1.0


@dataclass
class DetectionRecord:
    image_id: int
    category_id: int
    score: float
    bbox: list[float]
    mask: object = None

    def __post_init__(self):
        if len(self.bbox) != 4 or self.bbox[2] < 0 or self.bbox[3] < 0:
            raise ValueError(f"invalid detection bbox {self.bbox}")
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite detection score {self.score}")

    @classmethod
    def from_dict(cls, doc: dict) -> "DetectionRecord":
        mask = doc.get("segmentation", doc.get("mask"))
        return cls(doc["image_id"], doc["category_id"], float(doc["score"]),
                   [float(v) for v in doc["bbox"]], mask)


@dataclass
class EvalResult:
    ap: float = UNDEFINED
    ap50: float = UNDEFINED
    ap75: float = UNDEFINED
    ap_small: float = UNDEFINED
    ap_medium: float = UNDEFINED
    ap_large: float = UNDEFINED
    ar1: float = UNDEFINED
    ar10: float = UNDEFINED
    ar_small: float = UNDEFINED
    ar_medium: float = UNDEFINED
    ar_large: float = UNDEFINED


@dataclass
class Evaluation:
    iou_type: str
    mean: EvalResult
    per_category: dict[int, EvalResult] = field(default_factory=dict)
    # accumulated arrays, indexed [T, R, K, A, M] and [T, K, A, M]
    precision: np.ndarray | None = field(default=None, repr=False)
    recall: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "iou_type": self.iou_type,
            **asdict(self.mean),
            "per_category": {str(k): asdict(v) for k, v in sorted(self.per_category.items())},
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def load_detections(path) -> list[DetectionRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"detections file not found: {path}")
    doc = json.loads(path.read_text())
    if not isinstance(doc, list):
        raise ValueError(f"{path}: detections must be a JSON array")
    return [DetectionRecord.from_dict(d) for d in doc]


def _summ(values: np.ndarray) -> float:
    v = values[values > -1]
    return float(v.mean()) if v.size else UNDEFINED


def _summarize(precision: np.ndarray, recall: np.ndarray) -> EvalResult:
    """precision [T, R, K, A, M], recall [T, K, A, M] -> headline metrics."""
    areas = list(AREA_RANGES)
    a_all, a_s, a_m, a_l = (areas.index(n) for n in ("all", "small", "medium", "large"))
    m100 = MAX_DETS.index(100)
    t50 = int(np.argmin(np.abs(IOU_THRESHOLDS - 0.5)))
    t75 = int(np.argmin(np.abs(IOU_THRESHOLDS - 0.75)))
    return EvalResult(
        ap=_summ(precision[:, :, :, a_all, m100]),
        ap50=_summ(precision[t50, :, :, a_all, m100]),
        ap75=_summ(precision[t75, :, :, a_all, m100]),
        ap_small=_summ(precision[:, :, :, a_s, m100]),
        ap_medium=_summ(precision[:, :, :, a_m, m100]),
        ap_large=_summ(precision[:, :, :, a_l, m100]),
        ar1=_summ(recall[:, :, a_all, MAX_DETS.index(1)]),
        ar10=_summ(recall[:, :, a_all, MAX_DETS.index(10)]),
        ar_small=_summ(recall[:, :, a_s, m100]),
        ar_medium=_summ(recall[:, :, a_m, m100]),
        ar_large=_summ(recall[:, :, a_l, m100]),
    )


def _match(ious: np.ndarray, gt_ignore: np.ndarray, dt_area: np.ndarray, area_rng):
    """Greedy matching for one (image, category, area range).

    ``ious`` is D x G with detections already in descending score order and
    references ordered non-ignored first. Returns (dt_matched, dt_ignored),
    both T x D booleans.
    """
    T, (D, G) = len(IOU_THRESHOLDS), ious.shape
    dtm = np.zeros((T, D), dtype=bool)
    dt_ig = np.zeros((T, D), dtype=bool)
    for t, thr in enumerate(IOU_THRESHOLDS):
        gtm = np.zeros(G, dtype=bool)
        for d in range(D):
            best = min(thr, 1 - 1e-10)
            m = -1
            for g in range(G):
                if gtm[g]:
                    continue
                # once a real match exists, ignored references cannot displace it
                if m > -1 and not gt_ignore[m] and gt_ignore[g]:
                    break
                if ious[d, g] < best:
                    continue
                best, m = ious[d, g], g
            if m == -1:
                continue
            dt_ig[t, d] = gt_ignore[m]
            dtm[t, d] = True
            gtm[m] = True
    out_of_range = (dt_area < area_rng[0]) | (dt_area > area_rng[1])
    dt_ig |= ~dtm & out_of_range[None, :]
    return dtm, dt_ig


def evaluate(
    gt: AnnotationSet,
    dets: Sequence[DetectionRecord | dict],
    iou_type: str = "bbox",
    category_ids: Iterable[int] | None = None,
) -> Evaluation:
    """AP/AR per category and averaged over categories that have references."""
    if iou_type not in ("bbox", "segm"):
        raise ValueError(f"iou_type must be 'bbox' or 'segm', got {iou_type!r}")
    dets = [d if isinstance(d, DetectionRecord) else DetectionRecord.from_dict(d) for d in dets]
    cat_ids = sorted(gt.category_index) if category_ids is None else sorted(set(category_ids))
    for c in cat_ids:
        if c not in gt.category_index:
            raise AnnotationError(f"unknown category id {c}")
    for d in dets:
        if d.category_id not in gt.category_index:
            raise AnnotationError(f"detection refers to unknown category {d.category_id}")
        if d.image_id not in gt.image_index:
            raise AnnotationError(f"detection refers to unknown image {d.image_id}")
    img_ids = sorted(gt.image_index)
    cat_pos = {c: k for k, c in enumerate(cat_ids)}

    gts_by_cell: dict[tuple[int, int], list[dict]] = {}
    for ann in gt.annotations:
        if ann["category_id"] not in cat_pos:
            continue
        if ann.get("iscrowd", 0):
            raise AnnotationError(f"crowd annotation {ann['id']} is not supported")
        gts_by_cell.setdefault((ann["image_id"], ann["category_id"]), []).append(ann)
    dts_by_cell: dict[tuple[int, int], list[DetectionRecord]] = {}
    for d in dets:
        if d.category_id in cat_pos:
            dts_by_cell.setdefault((d.image_id, d.category_id), []).append(d)

    T, R, K, A, M = (len(IOU_THRESHOLDS), len(RECALL_THRESHOLDS), len(cat_ids),
                     len(AREA_RANGES), len(MAX_DETS))
    precision = -np.ones((T, R, K, A, M))
    recall = -np.ones((T, K, A, M))
    max_det = MAX_DETS[-1]

    for k, cid in enumerate(cat_ids):
        # per area range: list over images of (scores, dtm, dt_ig), and reference count
        per_area: list[list[tuple]] = [[] for _ in AREA_RANGES]
        npig = np.zeros(A, dtype=int)
        for img_id in img_ids:
            g_list = gts_by_cell.get((img_id, cid), [])
            d_list = dts_by_cell.get((img_id, cid), [])
            if not g_list and not d_list:
                continue
            order = np.argsort([-d.score for d in d_list], kind="mergesort")[:max_det]
            d_list = [d_list[i] for i in order]
            scores = np.array([d.score for d in d_list], dtype=float)
            ious, dt_area = _cell_ious(gt, img_id, g_list, d_list, iou_type)
            g_area = np.array([gt.area(g) for g in g_list], dtype=float)
            for a, rng in enumerate(AREA_RANGES.values()):
                g_ig = (g_area < rng[0]) | (g_area > rng[1])
                g_order = np.argsort(g_ig, kind="mergesort")
                dtm, dt_ig = _match(ious[:, g_order], g_ig[g_order], dt_area, rng)
                npig[a] += int((~g_ig).sum())
                per_area[a].append((scores, dtm, dt_ig))
        for a in range(A):
            if npig[a] == 0:
                continue
            for m, cap in enumerate(MAX_DETS):
                cells = per_area[a]
                if cells:
                    sc = np.concatenate([c[0][:cap] for c in cells])
                    dtm = np.concatenate([c[1][:, :cap] for c in cells], axis=1)
                    dt_ig = np.concatenate([c[2][:, :cap] for c in cells], axis=1)
                else:
                    sc, dtm, dt_ig = np.zeros(0), np.zeros((T, 0), bool), np.zeros((T, 0), bool)
                inds = np.argsort(-sc, kind="mergesort")
                dtm, dt_ig = dtm[:, inds], dt_ig[:, inds]
                tps = np.cumsum(dtm & ~dt_ig, axis=1, dtype=float)
                fps = np.cumsum(~dtm & ~dt_ig, axis=1, dtype=float)
                for t in range(T):
                    tp, fp = tps[t], fps[t]
                    nd = tp.size
                    rc = tp / npig[a]
                    pr = tp / (fp + tp + np.spacing(1))
                    recall[t, k, a, m] = rc[-1] if nd else 0.0
                    q = np.zeros(R)
                    pr = np.maximum.accumulate(pr[::-1])[::-1] if nd else pr
                    idx = np.searchsorted(rc, RECALL_THRESHOLDS, side="left")
                    valid = idx < nd
                    q[valid] = pr[idx[valid]]
                    precision[t, :, k, a, m] = q

    per_category = {cid: _summarize(precision[:, :, k:k + 1], recall[:, k:k + 1])
                    for k, cid in enumerate(cat_ids)}
    return Evaluation(iou_type, _summarize(precision, recall), per_category, precision, recall)


def _cell_ious(gt: AnnotationSet, img_id: int, g_list, d_list, iou_type: str):
    if iou_type == "bbox":
        d_boxes = np.array([d.bbox for d in d_list], dtype=float).reshape(-1, 4)
        g_boxes = np.array([g["bbox"] for g in g_list], dtype=float).reshape(-1, 4)
        return bbox_iou_matrix(d_boxes, g_boxes), d_boxes[:, 2] * d_boxes[:, 3]
    img = gt.image_index[img_id]
    h, w = int(img["height"]), int(img["width"])
    g_masks = []
    for g in g_list:
        if "segmentation" not in g:
            raise AnnotationError(f"annotation {g['id']} has no segmentation")
        g_masks.append(to_mask(g["segmentation"], h, w))
    d_masks = []
    for d in d_list:
        if d.mask is None:
            raise ValueError(f"segm evaluation needs a mask for every detection (image {img_id})")
        d_masks.append(to_mask(d.mask, h, w))
    d_area = np.array([m.sum() for m in d_masks], dtype=float)
    return mask_iou_matrix(d_masks, g_masks), d_area
