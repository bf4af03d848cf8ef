"""Command-line entry point: ``camofs {sample,eval,stats,toy-train,gradcheck}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .annotations import AnnotationError, load_annotations
from .cocoeval import evaluate, load_detections
from .fewshot import DEFAULT_SHOTS, build_nested_shots, export_split
from .gradsuite import run_suite
from .masks import MaskError
from .stats import write_stats
from .toy import ToyConfig

logger = logging.getLogger("camofs")


def _ann_path(args) -> Path:
    path = args.ann or os.environ.get("CAMOFS_ANN")
    if not path:
        raise AnnotationError("no annotation file given (use --ann or set CAMOFS_ANN)")
    return Path(path)


def cmd_sample(args) -> int:
    annset = load_annotations(_ann_path(args))
    novel = None
    if args.novel_classes:
        novel = [c.strip() for c in args.novel_classes.split(",") if c.strip()]
    max_k = max(max(DEFAULT_SHOTS), args.shots)
    split = build_nested_shots(annset, novel, max_k=max_k, seed=args.seed)
    out = export_split(split, args.shots, args.out)
    print(f"wrote {len(split.annotation_ids(args.shots))} annotations "
          f"({args.shots}-shot, {len(split.novel_classes)} classes, seed {args.seed}) to {out}")
    return 0


def cmd_eval(args) -> int:
    gt = load_annotations(_ann_path(args))
    dets = load_detections(args.dets)
    result = evaluate(gt, dets, args.iou_type)
    if args.out:
        result.save(args.out)
    for name, value in vars(result.mean).items():
        print(f"{name:>10s} {value:.4f}")
    return 0


def cmd_stats(args) -> int:
    annset = load_annotations(_ann_path(args))
    summ = write_stats(annset, args.out_dir, grid=args.grid)
    print(f"images={summ['num_images']} instances={summ['num_instances']} "
          f"categories={summ['num_categories']}")
    return 0


def cmd_toy_train(args) -> int:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    report = ToyConfig.from_dict(doc).run()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save_json(out / "train_report.json")
    report.save_csv(out / "loss_trace.csv")
    print(f"loss {report.initial_loss:.4f} -> {report.final_loss:.4f} "
          f"(ratio {report.loss_ratio}) in {report.steps} steps, {report.wall_time:.1f}s")
    for c in report.initial_gap:
        print(f"class {c}: gap {report.initial_gap[c]:.4f} -> {report.final_gap[c]:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(args.trials, args.tolerance, seed=args.seed)
    for r in results:
        print(r.line())
    failures = sum(r.failures for r in results)
    print(f"trials={args.trials} failures={failures}")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="camofs", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="build a nested K-shot training split")
    p.add_argument("--ann", help="annotation JSON (default: $CAMOFS_ANN)")
    p.add_argument("--novel-classes", default=None,
                   help="comma-separated category ids or names (default: all)")
    p.add_argument("--shots", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="COCO-style AP/AR of detections")
    p.add_argument("--ann", help="reference annotation JSON (default: $CAMOFS_ANN)")
    p.add_argument("--dets", required=True, help="JSON array of detections")
    p.add_argument("--iou-type", choices=("bbox", "segm"), default="bbox")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--ann", help="annotation JSON (default: $CAMOFS_ANN)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grid", type=int, default=64)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("toy-train", help="train a projection on synthetic RoIs")
    p.add_argument("--config", default=None, help="JSON config (task, preset/composite, steps, lr)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_toy_train)

    p = sub.add_parser("gradcheck", help="randomized finite-difference gradient checks")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, AnnotationError, MaskError) as exc:
        print(f"camofs {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
