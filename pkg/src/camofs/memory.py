"""Per-class FIFO feature memory and the contrastive memory loss."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .autodiff import Node, Scalar, common_tape, dot, log_sum_exp, matvec, mean, normalize, stack


@dataclass(frozen=True)
class MemoryConfig:
    tau: float = 1.0
    beta: float = 1e-2
    capacity: int = 512
    normalize: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be finite and > 0, got {self.tau}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")


def _snapshot(v) -> np.ndarray:
    arr = np.array(v.value if isinstance(v, Node) else v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D feature, got shape {arr.shape}")
    return arr


def _unit(arr: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(arr)
    if n == 0.0:
        raise ValueError("cannot store a zero feature in a normalizing bank")
    return arr / n


@dataclass
class MemorySample:
    fg: list
    bg: list
    general: object


class ClassMemoryBank:
    """Foreground and background stores for one class, N entries each.

    Stored entries are detached numpy copies, so later changes to a live tape
    never reach the bank. When ``normalize`` is set, features are scaled to
    unit length on the way in.
    """

    def __init__(self, class_id: int, capacity: int = 512, dim: int | None = None,
                 normalize: bool = True):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.class_id = int(class_id)
        self.capacity = int(capacity)
        self.dim = dim
        self.normalize = normalize
        self.fg_store: deque[np.ndarray] = deque(maxlen=self.capacity)
        self.bg_store: deque[np.ndarray] = deque(maxlen=self.capacity)

    def __repr__(self):
        return (f"ClassMemoryBank(class_id={self.class_id}, capacity={self.capacity}, "
                f"fg={len(self.fg_store)}, bg={len(self.bg_store)})")

    def _prepare(self, items: Iterable) -> list[np.ndarray]:
        out = []
        for v in items:
            arr = _snapshot(v)
            if self.dim is None:
                self.dim = arr.shape[0]
            elif arr.shape[0] != self.dim:
                raise ValueError(f"feature has dimension {arr.shape[0]}, bank holds {self.dim}")
            out.append(_unit(arr) if self.normalize else arr)
        return out

    def store(self, fg_new: Sequence = (), bg_new: Sequence = ()) -> "ClassMemoryBank":
        """Append features in order; the oldest entries drop out beyond capacity."""
        fg, bg = self._prepare(fg_new), self._prepare(bg_new)
        self.fg_store.extend(fg)
        self.bg_store.extend(bg)
        return self

    def sample(self) -> MemorySample:
        if not self.fg_store:
            raise ValueError(f"memory bank of class {self.class_id} has no foreground features")
        fg = [v.copy() for v in self.fg_store]
        bg = [v.copy() for v in self.bg_store]
        return MemorySample(fg=fg, bg=bg, general=np.mean(fg, axis=0))

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "capacity": self.capacity,
            "fg": [v.tolist() for v in self.fg_store],
            "bg": [v.tolist() for v in self.bg_store],
        }

    @classmethod
    def from_dict(cls, doc: Mapping, normalize: bool = True) -> "ClassMemoryBank":
        bank = cls(doc["class_id"], doc["capacity"], normalize=False)
        bank.store([np.asarray(v, float) for v in doc["fg"]], [np.asarray(v, float) for v in doc["bg"]])
        bank.normalize = normalize
        return bank

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path, normalize: bool = True) -> "ClassMemoryBank":
        return cls.from_dict(json.loads(Path(path).read_text()), normalize=normalize)


@dataclass
class MemoryBanks:
    """Lazily created per-class banks sharing one configuration."""

    cfg: MemoryConfig = field(default_factory=MemoryConfig)
    banks: dict[int, ClassMemoryBank] = field(default_factory=dict)

    def __getitem__(self, class_id: int) -> ClassMemoryBank:
        if class_id not in self.banks:
            self.banks[class_id] = ClassMemoryBank(class_id, self.cfg.capacity,
                                                   normalize=self.cfg.normalize)
        return self.banks[class_id]

    def get(self, class_id: int) -> ClassMemoryBank | None:
        return self.banks.get(class_id)


def memory_logits(sample: MemorySample, fg_query, cfg: MemoryConfig = MemoryConfig()):
    """Return (positive logit, background logit vector or None), already divided by tau."""
    tape = common_tape(sample.general, fg_query, *sample.bg)
    g, f = tape.lift(sample.general), tape.lift(fg_query)
    if cfg.normalize:
        g, f = normalize(g), normalize(f)
    pos = dot(g, f) * (1.0 / cfg.tau)
    if not sample.bg:
        return pos, None
    if any(isinstance(b, Node) for b in sample.bg):
        rows = [tape.lift(b) for b in sample.bg]
        bmat = stack([normalize(r) for r in rows] if cfg.normalize else rows)
    else:
        arr = np.stack([np.asarray(b, dtype=float) for b in sample.bg])
        if cfg.normalize:
            norms = np.linalg.norm(arr, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise ValueError("zero background feature cannot be normalized")
            arr = arr / norms
        bmat = tape.constant(arr)
    return pos, matvec(bmat, g) * (1.0 / cfg.tau)


def memory_loss(sample: MemorySample, fg_query, cfg: MemoryConfig = MemoryConfig()) -> Scalar:
    """-log of the softmax weight of the query among the query and the stored background.

    With s_f = g.f / tau and s_j = g.b_j / tau this is
    logsumexp([s_f, s_1, ..., s_n]) - s_f, where g is the class mean of the
    stored foreground. With ``cfg.normalize`` all vectors are unit-scaled first.
    """
    pos, neg = memory_logits(sample, fg_query, cfg)
    if neg is None:
        return pos - pos
    # log(exp(s_f) + sum_j exp(s_j)) without overflow
    return log_sum_exp([pos, log_sum_exp(neg)]) - pos


def batch_memory_loss(
    banks: Mapping[int, ClassMemoryBank] | MemoryBanks,
    queries: Sequence[tuple[int, object]],
    cfg: MemoryConfig = MemoryConfig(),
) -> Scalar:
    """Mean memory loss over (class_id, foreground query) pairs."""
    if not queries:
        raise ValueError("no memory-loss queries")
    losses = []
    samples: dict[int, MemorySample] = {}
    for class_id, query in queries:
        bank = banks.get(class_id)
        if bank is None or not bank.fg_store:
            raise ValueError(f"no foreground memory for class {class_id}")
        if class_id not in samples:
            samples[class_id] = bank.sample()
        losses.append(memory_loss(samples[class_id], query, cfg))
    return mean(losses)
