"""Foreground/background split of RoI feature grids by instance mask."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Tape, Vector, mean


class EmptyForeground(ValueError):
    """The mask selects no location of the RoI."""


@dataclass
class FgBgPartition:
    """Foreground set, background set and the foreground mean used as anchor."""

    fg: list[Vector]
    bg: list[Vector]
    avg: Vector

    @classmethod
    def from_vectors(cls, fg: Sequence[Vector], bg: Sequence[Vector]) -> "FgBgPartition":
        if not fg:
            raise EmptyForeground("partition needs at least one foreground feature")
        return cls(list(fg), list(bg), mean(list(fg)))

    @property
    def has_background(self) -> bool:
        return len(self.bg) > 0


def _check_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"mask must be a non-empty H x W grid, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask bits must be 0 or 1")
    return m.astype(bool)


def split_locations(mask) -> tuple[np.ndarray, np.ndarray]:
    """Row-major flat indices of foreground and background locations."""
    flat = _check_mask(mask).ravel()
    return np.flatnonzero(flat), np.flatnonzero(~flat)


def partition(patch, mask, tape: Tape | None = None) -> FgBgPartition:
    """Split a C x H x W feature patch into foreground and background vectors.

    Each spatial location contributes one length-C vector, taken in row-major
    order. The vectors become leaves of ``tape`` (a fresh tape by default), so
    gradients with respect to individual features are available.
    """
    data = np.asarray(patch, dtype=float)
    if data.ndim != 3 or min(data.shape) < 1:
        raise ValueError(f"patch must be C x H x W, got shape {data.shape}")
    m = _check_mask(mask)
    if m.shape != data.shape[1:]:
        raise ValueError(f"mask {m.shape} does not match patch grid {data.shape[1:]}")
    fg_idx, bg_idx = split_locations(m)
    if fg_idx.size == 0:
        raise EmptyForeground("mask has no foreground location")
    tape = Tape() if tape is None else tape
    feats = data.reshape(data.shape[0], -1).T
    fg = [tape.vector(feats[i]) for i in fg_idx]
    bg = [tape.vector(feats[i]) for i in bg_idx]
    return FgBgPartition.from_vectors(fg, bg)


def downsample_mask(mask, target_h: int, target_w: int) -> np.ndarray:
    """Nearest-neighbour resampling: out[i, j] = mask[i*H // th, j*W // tw]."""
    m = _check_mask(mask)
    if target_h < 1 or target_w < 1:
        raise ValueError("target dimensions must be >= 1")
    h, w = m.shape
    rows = (np.arange(target_h) * h) // target_h
    cols = (np.arange(target_w) * w) // target_w
    return m[np.ix_(rows, cols)].astype(np.uint8)
