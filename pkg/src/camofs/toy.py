"""Desk-scale training of a linear feature projection with the composite objective.

Synthetic RoIs mimic camouflage: foreground and background features share a
class mean and differ only by a small offset, buried in noise. A D x D
projection (identity at start) is trained by full-batch gradient descent on
``alpha * triplet + beta * memory`` (the detector loss is fixed at zero), and
the foreground/background discrimination gap is compared before and after.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape, matvec
from .memory import MemoryBanks, MemoryConfig, batch_memory_loss
from .objective import BaseLossTerm, CompositeConfig, final_loss
from .roi import FgBgPartition, split_locations
from .triplet import TripletConfig, batch_triplet_loss

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass(frozen=True)
class SyntheticTask:
    num_classes: int = 2
    dim: int = 8
    patches_per_class: int = 8
    height: int = 4
    width: int = 4
    separation: float = 0.05
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if not self.noise > 0:
            raise ValueError("noise must be > 0")
        if self.height * self.width < 2:
            raise ValueError("patches need at least two locations")


@dataclass
class LabeledPatch:
    class_id: int
    patch: np.ndarray  # C x H x W
    mask: np.ndarray   # H x W, 0/1


def generate(task: SyntheticTask) -> list[LabeledPatch]:
    """Sample RoI patches: fg ~ N(mu_c, noise^2), bg ~ N(mu_c + separation * u_c, noise^2).

    ``mu_c`` and ``u_c`` are independent random unit vectors per class. The
    foreground of each mask is a random axis-aligned rectangle that leaves at
    least one background location.
    """
    rng = np.random.default_rng(task.seed)
    H, W, D = task.height, task.width, task.dim
    out = []
    for c in range(task.num_classes):
        mu = rng.normal(size=D)
        mu /= np.linalg.norm(mu)
        u = rng.normal(size=D)
        u /= np.linalg.norm(u)
        for _ in range(task.patches_per_class):
            while True:
                h, w = rng.integers(1, H + 1), rng.integers(1, W + 1)
                if h * w < H * W:
                    break
            r, q = rng.integers(0, H - h + 1), rng.integers(0, W - w + 1)
            mask = np.zeros((H, W), dtype=np.uint8)
            mask[r:r + h, q:q + w] = 1
            centers = np.where(mask[..., None] == 1, mu, mu + task.separation * u)
            feats = centers + task.noise * rng.normal(size=(H, W, D))
            out.append(LabeledPatch(c, feats.transpose(2, 0, 1).copy(), mask))
    return out


def discrimination_gap(patches: list[LabeledPatch], projection: np.ndarray) -> dict[int, float]:
    """Per class: mean over RoIs of mean cos(avg, fg) - mean cos(avg, bg)."""
    per_class: dict[int, list[float]] = {}
    for lp in patches:
        fg_idx, bg_idx = split_locations(lp.mask)
        if fg_idx.size == 0 or bg_idx.size == 0:
            continue
        feats = lp.patch.reshape(lp.patch.shape[0], -1).T @ projection.T
        unit = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        avg = feats[fg_idx].mean(axis=0)
        avg /= np.linalg.norm(avg)
        gap = float((unit[fg_idx] @ avg).mean() - (unit[bg_idx] @ avg).mean())
        per_class.setdefault(lp.class_id, []).append(gap)
    return {c: float(np.mean(v)) for c, v in sorted(per_class.items())}


@dataclass
class TrainReport:
    loss: list[float]
    triplet: list[float | None]
    memory: list[float | None]
    initial_gap: dict[int, float]
    final_gap: dict[int, float]
    steps: int
    wall_time: float
    skipped_rois: int = 0
    projection: list[list[float]] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.loss[0]

    @property
    def final_loss(self) -> float:
        return self.loss[-1]

    @property
    def loss_ratio(self) -> float | None:
        return self.final_loss / self.initial_loss if self.initial_loss else None

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["initial_gap"] = {str(k): v for k, v in self.initial_gap.items()}
        doc["final_gap"] = {str(k): v for k, v in self.final_gap.items()}
        doc.update(initial_loss=self.initial_loss, final_loss=self.final_loss,
                   loss_ratio=self.loss_ratio)
        return doc

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "triplet", "memory"])
            for i, (l, t, m) in enumerate(zip(self.loss, self.triplet, self.memory)):
                writer.writerow([i, repr(l), "" if t is None else repr(t), "" if m is None else repr(m)])


def _project(tape: Tape, proj, feats: np.ndarray, idx: np.ndarray):
    return [matvec(proj, feats[i]) for i in idx]


def train(task: SyntheticTask, cfg: CompositeConfig, steps: int = 200, lr: float = 0.1) -> TrainReport:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not lr > 0:
        raise ValueError("lr must be > 0")
    start = time.perf_counter()
    patches = generate(task)
    rois = []
    skipped = 0
    for lp in patches:
        fg_idx, bg_idx = split_locations(lp.mask)
        if fg_idx.size == 0:
            skipped += 1
            logger.info("skipping RoI of class %d: empty foreground", lp.class_id)
            continue
        feats = lp.patch.reshape(lp.patch.shape[0], -1).T
        rois.append((lp.class_id, feats, fg_idx, bg_idx))

    P = np.eye(task.dim)
    banks = MemoryBanks(cfg.memory)
    # seed the banks with the untrained features so the first step already has a memory term
    for cid, feats, fg_idx, bg_idx in rois:
        banks[cid].store(feats[fg_idx] @ P.T, feats[bg_idx] @ P.T)

    initial_gap = discrimination_gap(patches, P)
    loss_trace, trip_trace, mem_trace = [], [], []
    for step in range(steps):
        tape = Tape()
        proj = tape.matrix(P)
        parts, queries, pending = [], [], []
        for cid, feats, fg_idx, bg_idx in rois:
            part = FgBgPartition.from_vectors(_project(tape, proj, feats, fg_idx),
                                              _project(tape, proj, feats, bg_idx))
            parts.append(part)
            if banks.get(cid) is not None and banks[cid].fg_store:
                queries.append((cid, part.avg))
            pending.append((cid, part))
        l_trip = (batch_triplet_loss(parts, cfg.triplet)
                  if any(p.has_background for p in parts) else None)
        l_mem = batch_memory_loss(banks, queries, cfg.memory) if queries else None
        total = final_loss(BaseLossTerm(0.0), l_trip, l_mem, cfg)
        value = float(total.value)
        if not math.isfinite(value):
            raise TrainingDiverged(step, value)
        loss_trace.append(value)
        trip_trace.append(None if l_trip is None else float(l_trip.value))
        mem_trace.append(None if l_mem is None else float(l_mem.value))
        tape.backward(total)
        P = P - lr * proj.grad
        # banks see this step's features only after the loss was formed
        for cid, part in pending:
            banks[cid].store(part.fg, part.bg)

    return TrainReport(
        loss=loss_trace,
        triplet=trip_trace,
        memory=mem_trace,
        initial_gap=initial_gap,
        final_gap=discrimination_gap(patches, P),
        steps=steps,
        wall_time=time.perf_counter() - start,
        skipped_rois=skipped,
        projection=P.tolist(),
    )


# With no detector loss the weights only rescale the step size; alpha = 1 keeps
# the triplet term at unit scale while beta keeps its default.
PRESETS = {
    "composite": CompositeConfig(alpha=1.0, beta=1e-2,
                                 triplet=TripletConfig(alpha=1.0), memory=MemoryConfig(beta=1e-2)),
    "triplet-only": CompositeConfig(alpha=1.0, beta=0.0,
                                    triplet=TripletConfig(alpha=1.0), memory=MemoryConfig(beta=0.0)),
    "memory-only": CompositeConfig(alpha=0.0, beta=1.0,
                                   triplet=TripletConfig(alpha=0.0), memory=MemoryConfig(beta=1.0)),
}


@dataclass
class ToyConfig:
    task: SyntheticTask = field(default_factory=SyntheticTask)
    composite: CompositeConfig = field(default_factory=lambda: PRESETS["composite"])
    steps: int = 200
    lr: float = 0.1

    @classmethod
    def from_dict(cls, doc: dict) -> "ToyConfig":
        doc = dict(doc)
        task = SyntheticTask(**doc.pop("task", {}))
        preset = doc.pop("preset", "composite")
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        comp = doc.pop("composite", None)
        composite = CompositeConfig.from_dict(comp) if comp is not None else PRESETS[preset]
        unknown = set(doc) - {"steps", "lr"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(task, composite, int(doc.get("steps", 200)), float(doc.get("lr", 0.1)))

    def run(self) -> TrainReport:
        return train(self.task, self.composite, self.steps, self.lr)
