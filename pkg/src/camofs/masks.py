"""Instance mask decoding and overlap measures.

Segmentations follow the usual COCO conventions:

* polygons: a list of flat ``[x1, y1, x2, y2, ...]`` rings, merged by union;
* run-length encoding: ``{"size": [h, w], "counts": ...}`` in column-major
  order starting with a run of zeros, ``counts`` either a list of ints or the
  compact string form.

A pixel (r, c) belongs to a polygon when its centre (c + 0.5, r + 0.5) is
inside under the even-odd rule, so an integer-aligned rectangle covers exactly
w * h pixels.
"""

from __future__ import annotations

import numpy as np


class MaskError(ValueError):
    pass


def iou_bbox(a, b) -> float:
    """IoU of two [x, y, w, h] boxes; 0 when the union is empty."""
    ax, ay, aw, ah = map(float, a)
    bx, by, bw, bh = map(float, b)
    if min(aw, ah, bw, bh) < 0:
        raise MaskError("negative box extent")
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def bbox_iou_matrix(dts: np.ndarray, gts: np.ndarray) -> np.ndarray:
    """Pairwise IoU between N detection boxes and M reference boxes (N x M)."""
    dts = np.asarray(dts, dtype=float).reshape(-1, 4)
    gts = np.asarray(gts, dtype=float).reshape(-1, 4)
    dx1, dy1 = dts[:, 0:1], dts[:, 1:2]
    dx2, dy2 = dx1 + dts[:, 2:3], dy1 + dts[:, 3:4]
    gx1, gy1 = gts[:, 0], gts[:, 1]
    gx2, gy2 = gx1 + gts[:, 2], gy1 + gts[:, 3]
    iw = np.clip(np.minimum(dx2, gx2) - np.maximum(dx1, gx1), 0, None)
    ih = np.clip(np.minimum(dy2, gy2) - np.maximum(dy1, gy1), 0, None)
    inter = iw * ih
    union = (dts[:, 2:3] * dts[:, 3:4]) + (gts[:, 2] * gts[:, 3]) - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def rasterize_polygon(coords, height: int, width: int) -> np.ndarray:
    """Even-odd fill of one polygon ring on an H x W canvas."""
    pts = np.asarray(coords, dtype=float)
    if pts.ndim != 1 or pts.size < 6 or pts.size % 2:
        raise MaskError(f"polygon needs an even number (>= 6) of coordinates, got {pts.size}")
    if not np.all(np.isfinite(pts)):
        raise MaskError("polygon has non-finite coordinates")
    xs, ys = pts[0::2], pts[1::2]
    x0, y0 = xs, ys
    x1, y1 = np.roll(xs, -1), np.roll(ys, -1)
    mask = np.zeros((height, width), dtype=bool)
    centers_x = np.arange(width) + 0.5
    for r in range(height):
        yc = r + 0.5
        # half-open rule avoids double counting at shared vertices
        crosses = (y0 <= yc) != (y1 <= yc)
        if not crosses.any():
            continue
        t = (yc - y0[crosses]) / (y1[crosses] - y0[crosses])
        xints = x0[crosses] + t * (x1[crosses] - x0[crosses])
        # pixel centres with an odd number of crossings to their right are inside
        counts = (xints[None, :] > centers_x[:, None]).sum(axis=1)
        mask[r] = counts % 2 == 1
    return mask


def rle_decode(rle: dict) -> np.ndarray:
    try:
        h, w = (int(v) for v in rle["size"])
        counts = rle["counts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MaskError(f"malformed run-length encoding: {exc}") from exc
    if isinstance(counts, (str, bytes)):
        counts = _counts_from_string(counts.decode() if isinstance(counts, bytes) else counts)
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts) or sum(counts) != h * w:
        raise MaskError(f"run lengths do not cover a {h}x{w} canvas")
    flat = np.zeros(h * w, dtype=bool)
    pos, val = 0, False
    for c in counts:
        if val:
            flat[pos:pos + c] = True
        pos += c
        val = not val
    return flat.reshape((w, h)).T


def rle_encode(mask, compress: bool = False) -> dict:
    """Column-major run-length encoding of a binary mask."""
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    flat = m.T.ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        counts = [0] + counts
    counts = [int(c) for c in counts]
    return {"size": [h, w], "counts": _counts_to_string(counts) if compress else counts}


def _counts_to_string(counts: list[int]) -> str:
    out = []
    for i, c in enumerate(counts):
        x = c - counts[i - 2] if i > 2 else c
        more = True
        while more:
            ch = x & 0x1F
            x >>= 5
            more = not ((ch & 0x10) == 0 and x == 0 or (ch & 0x10) != 0 and x == -1)
            if more:
                ch |= 0x20
            out.append(chr(ch + 48))
    return "".join(out)


def _counts_from_string(s: str) -> list[int]:
    counts: list[int] = []
    p = 0
    while p < len(s):
        x, k, more = 0, 0, True
        while more:
            if p >= len(s):
                raise MaskError("truncated run-length string")
            c = ord(s[p]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and c & 0x10:
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def to_mask(segmentation, height: int, width: int) -> np.ndarray:
    """Decode polygons or a run-length encoding to an H x W boolean mask."""
    if isinstance(segmentation, dict):
        m = rle_decode(segmentation)
        if m.shape != (height, width):
            raise MaskError(f"encoding is {m.shape}, canvas is {(height, width)}")
        return m
    if isinstance(segmentation, (list, tuple)):
        if not segmentation:
            raise MaskError("empty polygon list")
        out = np.zeros((height, width), dtype=bool)
        for ring in segmentation:
            out |= rasterize_polygon(ring, height, width)
        return out
    if isinstance(segmentation, np.ndarray) and segmentation.shape == (height, width):
        return segmentation.astype(bool)
    raise MaskError(f"unsupported segmentation of type {type(segmentation).__name__}")


def mask_iou_matrix(dts: list[np.ndarray], gts: list[np.ndarray]) -> np.ndarray:
    if not dts or not gts:
        return np.zeros((len(dts), len(gts)))
    d = np.stack([m.ravel() for m in dts]).astype(np.float64)
    g = np.stack([m.ravel() for m in gts]).astype(np.float64)
    inter = d @ g.T
    union = d.sum(1)[:, None] + g.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def iou_mask(a, b, canvas_h: int, canvas_w: int) -> float:
    """Pixel IoU of two segmentations rasterized on the same canvas."""
    ma, mb = to_mask(a, canvas_h, canvas_w), to_mask(b, canvas_h, canvas_w)
    return float(mask_iou_matrix([ma], [mb])[0, 0])
