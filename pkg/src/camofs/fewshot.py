"""Nested K-shot benchmark construction.

For every novel class a single seeded draw of ``max_k`` instances is made;
the K-shot set is the first K of that draw. Lower-shot sets are therefore
always contained in higher-shot ones. Annotations of novel classes left out
of the ``max_k`` draw form the test pool.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .annotations import AnnotationError, AnnotationSet, save_annotations

DEFAULT_SHOTS = (1, 2, 3, 5)


@dataclass(frozen=True)
class FewShotSplit:
    base_classes: frozenset[int]
    novel_classes: frozenset[int]
    max_k: int
    seed: int
    # K -> class id -> annotation ids in draw order
    shots: dict[int, dict[int, list[int]]]
    source: AnnotationSet = field(repr=False, compare=False)

    def annotation_ids(self, k: int) -> list[int]:
        if k not in self.shots:
            raise KeyError(f"{k}-shot selection not available (max_k={self.max_k})")
        return [a for cls in sorted(self.shots[k]) for a in self.shots[k][cls]]

    def test_pool(self) -> list[int]:
        """Ids of novel-class annotations outside the largest training selection."""
        train = set(self.annotation_ids(self.max_k))
        return [a["id"] for a in self.source.annotations
                if a["category_id"] in self.novel_classes and a["id"] not in train]


def build_nested_shots(
    annset: AnnotationSet,
    novel=None,
    max_k: int = 5,
    seed: int = 0,
) -> FewShotSplit:
    """Draw up to ``max_k`` instances per novel class and nest every K <= max_k.

    ``novel`` defaults to every category of ``annset``; the remaining
    categories are the base classes.
    """
    if max_k < 1:
        raise ValueError(f"max_k must be >= 1, got {max_k}")
    novel_ids = set(annset.category_ids()) if novel is None else annset.resolve_categories(novel)
    by_cat = annset.annotations_by_category()
    empty = sorted(c for c in novel_ids if not by_cat[c])
    if empty:
        names = ", ".join(f"{c} ({annset.category_index[c]['name']})" for c in empty)
        raise AnnotationError(f"novel classes without instances: {names}")

    rng = random.Random(seed)
    draws = {}
    for cid in sorted(novel_ids):
        pool = sorted(a["id"] for a in by_cat[cid])
        draws[cid] = rng.sample(pool, min(max_k, len(pool)))
    shots = {k: {cid: d[:k] for cid, d in draws.items()} for k in range(1, max_k + 1)}
    base = frozenset(annset.category_ids()) - frozenset(novel_ids)
    return FewShotSplit(base, frozenset(novel_ids), max_k, seed, shots, annset)


def export_split(split: FewShotSplit, k: int, out_path) -> Path:
    """Write the K-shot annotations and their images as an annotation file."""
    subset = split.source.subset(split.annotation_ids(k))
    out_path = Path(out_path)
    if out_path.parent and not out_path.parent.exists():
        out_path.parent.mkdir(parents=True)
    save_annotations(subset, out_path)
    return out_path
