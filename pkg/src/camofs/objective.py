"""Total training objective: base loss plus weighted triplet and memory terms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .autodiff import Node, Scalar, common_tape
from .memory import MemoryConfig
from .triplet import TripletConfig


@dataclass(frozen=True)
class CompositeConfig:
    alpha: float = 1e-1
    beta: float = 1e-2
    triplet: TripletConfig = field(default_factory=TripletConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    @classmethod
    def from_dict(cls, doc: dict) -> "CompositeConfig":
        doc = dict(doc)
        t_doc, m_doc = dict(doc.pop("triplet", {})), dict(doc.pop("memory", {}))
        # the top-level weights are authoritative; mirror them into the sub-configs
        if "alpha" in doc:
            t_doc.setdefault("alpha", doc["alpha"])
        if "beta" in doc:
            m_doc.setdefault("beta", doc["beta"])
        triplet, memory = TripletConfig(**t_doc), MemoryConfig(**m_doc)
        return cls(triplet=triplet, memory=memory, **doc)


@dataclass(frozen=True)
class BaseLossTerm:
    """Externally computed detector loss, passed through unchanged."""

    value: Scalar | float = 0.0


def _check(name: str, term) -> None:
    v = float(term.value) if isinstance(term, Node) else float(term)
    if not math.isfinite(v):
        raise ValueError(f"{name} is not finite: {v}")


def final_loss(
    base: BaseLossTerm | Scalar | float,
    l_triplet: Scalar | float | None,
    l_memory: Scalar | float | None,
    cfg: CompositeConfig = CompositeConfig(),
) -> Scalar:
    """base + alpha * l_triplet + beta * l_memory.

    A missing term (None) contributes exactly zero.
    """
    base_value = base.value if isinstance(base, BaseLossTerm) else base
    terms = {"base loss": base_value, "triplet loss": l_triplet, "memory loss": l_memory}
    for name, t in terms.items():
        if t is not None:
            _check(name, t)
    tape = common_tape(base_value, l_triplet, l_memory)
    total = tape.lift(base_value)
    if l_triplet is not None:
        total = total + cfg.alpha * tape.lift(l_triplet)
    if l_memory is not None:
        total = total + cfg.beta * tape.lift(l_memory)
    return total
