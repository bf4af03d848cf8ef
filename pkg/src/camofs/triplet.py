"""Instance triplet loss with the foreground mean as anchor."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .autodiff import Scalar, cosine_distance, mean, relu
from .roi import FgBgPartition


@dataclass(frozen=True)
class TripletConfig:
    margin: float = 0.5
    alpha: float = 1e-1

    def __post_init__(self):
        if not 0.0 <= self.margin <= 2.0:
            raise ValueError(f"margin must lie in [0, 2], got {self.margin}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")


def pre_hinge(part: FgBgPartition, cfg: TripletConfig = TripletConfig()) -> Scalar:
    """mean_i d(avg, fg_i) - mean_j d(avg, bg_j) + margin, before clipping at 0."""
    if not part.fg or not part.bg:
        raise ValueError("triplet loss needs non-empty foreground and background sets")
    pos = mean([cosine_distance(part.avg, f) for f in part.fg])
    neg = mean([cosine_distance(part.avg, b) for b in part.bg])
    return pos - neg + cfg.margin


def triplet_loss(part: FgBgPartition, cfg: TripletConfig = TripletConfig()) -> Scalar:
    """Hinged cosine triplet loss of one RoI.

    The set-valued distances are reduced by their mean over the foreground
    (positives) and background (negatives) members.
    """
    return relu(pre_hinge(part, cfg))


def batch_triplet_loss(
    parts: Sequence[FgBgPartition], cfg: TripletConfig = TripletConfig()
) -> Scalar:
    """Unweighted mean of per-RoI losses over RoIs that have a background.

    Raises ValueError when no RoI is eligible.
    """
    eligible = [p for p in parts if p.fg and p.bg]
    if not eligible:
        raise ValueError("no RoI with both foreground and background features")
    return mean([triplet_loss(p, cfg) for p in eligible])
