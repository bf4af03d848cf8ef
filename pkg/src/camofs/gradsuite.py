"""Randomized gradient checks of the losses against central differences."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .autodiff import (GradCheckResult, check_gradients, cosine_distance, dot, exp, log,
                       log_sum_exp, matvec, mean, normalize, stack, sum_scalars)
from .memory import MemoryConfig, MemorySample, memory_loss
from .objective import CompositeConfig, final_loss
from .roi import FgBgPartition
from .triplet import TripletConfig, pre_hinge, triplet_loss

HINGE_GUARD = 1e-3


@dataclass
class SuiteResult:
    kind: str
    trials: int
    failures: int
    max_rel_error: float
    seconds: float

    def line(self) -> str:
        return (f"{self.kind}: trials={self.trials} failures={self.failures} "
                f"max_rel_err={self.max_rel_error:.3e} time={self.seconds:.2f}s")


def _triplet_case(rng, max_dim: int = 8, max_set: int = 5):
    """Random partition features (as arrays) and config, away from the hinge kink."""
    while True:
        d = int(rng.integers(2, max_dim + 1))
        n_fg, n_bg = int(rng.integers(1, max_set + 1)), int(rng.integers(1, max_set + 1))
        center = rng.normal(size=d)
        fg = center + 0.7 * rng.normal(size=(n_fg, d))
        bg = center + rng.normal(size=d) + 0.7 * rng.normal(size=(n_bg, d))
        cfg = TripletConfig(margin=float(rng.uniform(0.0, 1.0)))
        part = FgBgPartition.from_vectors(list(fg), list(bg))
        if abs(float(pre_hinge(part, cfg).value)) > HINGE_GUARD:
            return fg, bg, cfg


def _build_triplet(n_fg, cfg):
    def build(tape, leaves):
        return triplet_loss(FgBgPartition.from_vectors(leaves[:n_fg], leaves[n_fg:]), cfg)
    return build


def _memory_case(rng):
    d = int(rng.integers(2, 9))
    n_bg = int(rng.integers(0, 7))
    cfg = MemoryConfig(tau=float(rng.uniform(0.3, 2.0)), normalize=bool(rng.integers(0, 2)))
    g, f = rng.normal(size=d), rng.normal(size=d)
    bg = rng.normal(size=(n_bg, d))
    return g, f, bg, cfg


def _build_memory(cfg):
    def build(tape, leaves):
        g, f, *bg = leaves
        return memory_loss(MemorySample(fg=[], bg=bg, general=g), f, cfg)
    return build


def trial_triplet(rng, tolerance: float) -> GradCheckResult:
    fg, bg, cfg = _triplet_case(rng)
    return check_gradients(_build_triplet(len(fg), cfg), [*fg, *bg], tolerance=tolerance)


def trial_memory(rng, tolerance: float) -> GradCheckResult:
    g, f, bg, cfg = _memory_case(rng)
    return check_gradients(_build_memory(cfg), [g, f, *bg], tolerance=tolerance)


def trial_final(rng, tolerance: float) -> GradCheckResult:
    # smaller cases: the two terms are covered in depth by their own trials
    fg, bg, tcfg = _triplet_case(rng, max_dim=6, max_set=3)
    d = fg.shape[1]
    g, f = rng.normal(size=d), rng.normal(size=d)
    mbg = rng.normal(size=(int(rng.integers(0, 4)), d))
    mcfg = MemoryConfig(tau=float(rng.uniform(0.3, 2.0)))
    cfg = CompositeConfig(alpha=float(rng.uniform(0, 1)), beta=float(rng.uniform(0, 1)),
                          triplet=tcfg, memory=mcfg)
    n_fg, n_bg = len(fg), len(bg)

    def build(tape, leaves):
        base = leaves[0]
        tf, tb = leaves[1:1 + n_fg], leaves[1 + n_fg:1 + n_fg + n_bg]
        mg, mf, *mb = leaves[1 + n_fg + n_bg:]
        lt = triplet_loss(FgBgPartition.from_vectors(tf, tb), tcfg)
        lm = memory_loss(MemorySample(fg=[], bg=mb, general=mg), mf, mcfg)
        return final_loss(base, lt, lm, cfg)

    inputs = [np.asarray(rng.normal()), *fg, *bg, g, f, *mbg]
    return check_gradients(build, inputs, tolerance=tolerance)


def random_graph(rng):
    """A random scalar expression over a few vector leaves, built from the primitive ops."""
    d = int(rng.integers(2, 6))
    n_leaves = int(rng.integers(2, 5))
    arrays = [rng.normal(size=d) for _ in range(n_leaves)] + [rng.normal(size=(d, d))]
    choices = rng.integers(0, 7, size=int(rng.integers(2, 6)))
    picks = rng.integers(0, n_leaves, size=(len(choices), 3))
    weights = rng.normal(size=len(choices))

    def build(tape, leaves):
        vecs, mat = leaves[:-1], leaves[-1]
        terms = []
        for op, (i, j, k), w in zip(choices, picks, weights):
            a, b, c = vecs[i], vecs[j], vecs[k]
            if op == 0:
                s = dot(a, b)
            elif op == 1:
                s = cosine_distance(a, b + c)
            elif op == 2:
                s = log_sum_exp([dot(a, b), dot(b, c), dot(a, c)])
            elif op == 3:
                s = dot(normalize(a), matvec(mat, b))
            elif op == 4:
                s = dot(mean([a, b, c]), matvec(mat, c))
            elif op == 5:
                s = log(exp(dot(a, a) * 0.1) + 1.0)
            else:
                s = log_sum_exp(matvec(stack([a, b, c]), normalize(c)))
            terms.append(s * float(w))
        return sum_scalars(terms)

    return build, arrays


def trial_graph(rng, tolerance: float) -> GradCheckResult:
    build, arrays = random_graph(rng)
    return check_gradients(build, arrays, tolerance=tolerance)


TRIALS = {
    "triplet_loss": trial_triplet,
    "memory_loss": trial_memory,
    "final_loss": trial_final,
}


ALL_TRIALS = {**TRIALS, "random_graph": trial_graph}


def run_suite(trials: int = 100, tolerance: float = 1e-4, seed: int = 0,
              kinds=tuple(TRIALS)) -> list[SuiteResult]:
    out = []
    for kind in kinds:
        fn = ALL_TRIALS[kind]
        rng = np.random.default_rng([seed, list(ALL_TRIALS).index(kind)])
        t0 = time.perf_counter()
        results = [fn(rng, tolerance) for _ in range(trials)]
        out.append(SuiteResult(
            kind, trials, sum(0 if r.ok else 1 for r in results),
            max((r.max_rel_error for r in results), default=0.0),
            time.perf_counter() - t0,
        ))
    return out
