"""Command-line interface.

Subcommands::

    maskbudget gen       --params params.json --seed 7 -o dataset.json
    maskbudget eval      --dataset d.json --labels approx [--hist-bins 0.1]
    maskbudget order     --dataset d.json --strategy BB4All-IC-Oo -o sched.csv
    maskbudget simulate  --dataset d.json --strategies FbF-M,FbF-BB \
                         --budgets 0:4000:200 -o curves.csv

Exit codes: 0 on success, 2 for validation/schema errors, 3 for I/O errors,
1 for any other failure reported by the tool.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .costs import CostModel
from .dataio import (
    Dataset,
    load_cost_config,
    cost_model_from_sources,
    load_dataset,
    parse_budget_spec,
    write_curves_csv,
    write_dataset,
    write_histogram_csv,
    write_schedule_csv,
)
from .errors import MaskBudgetError, ValidationError
from .masks import RleMask
from .metrics import correctness_by_overlap, match_instances, scores_from_counts
from .simulate import TrainerHook, run_campaign
from .strategies import StrategyId, build_schedule, frame_overlap_scores
from .synth import DegradationModel, SceneParams, generate_dataset


def _load_params_file(path: str) -> tuple[dict[str, Any], dict[str, Any]]:
    p = Path(path)
    if p.suffix.lower() == ".toml":
        import tomli

        with open(p, "rb") as fh:
            doc = tomli.load(fh)
    else:
        with open(p, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: expected an object at top level")
    unknown = set(doc) - {"scene", "degradation"}
    if unknown:
        raise ValidationError(f"{path}: unknown sections {sorted(unknown)}")
    scene = doc.get("scene", {})
    degradation = doc.get("degradation", {})
    for name, section in (("scene", scene), ("degradation", degradation)):
        if not isinstance(section, dict):
            raise ValidationError(f"{path}: '{name}' must be an object")
    return scene, degradation


def _build_params(scene: dict[str, Any], seed: int | None) -> SceneParams:
    scene = dict(scene)
    for key in ("instances_per_frame", "size_range"):
        if key in scene:
            scene[key] = tuple(scene[key])
    if seed is not None:
        scene["seed"] = seed
    try:
        return SceneParams(**scene)
    except TypeError as exc:
        raise ValidationError(f"bad scene params: {exc}") from exc


def _build_degradation(section: dict[str, Any]) -> DegradationModel:
    try:
        return DegradationModel(**section)
    except TypeError as exc:
        raise ValidationError(f"bad degradation params: {exc}") from exc


def _cmd_gen(args: argparse.Namespace) -> int:
    scene, degradation = _load_params_file(args.params) if args.params else ({}, {})
    params = _build_params(scene, args.seed)
    model = _build_degradation(degradation)
    dataset, manifest = generate_dataset(params, model)
    out = Path(args.output)
    write_dataset(dataset, out)
    manifest_path = out.with_suffix(".manifest.json")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")
    print(
        f"wrote {len(dataset.frames)} frames / {dataset.n_instances} instances "
        f"to {out} (manifest: {manifest_path})"
    )
    return 0


def _labels_for_frame(
    dataset: Dataset, source: str, labels_by_frame: dict[int, list[RleMask]] | None, frame_idx: int
) -> list[RleMask]:
    frame = dataset.frames[frame_idx]
    if source == "gt":
        return [inst.gt_mask for inst in frame.instances]
    if source == "approx":
        out = []
        for inst in frame.instances:
            if inst.approx_mask is None:
                raise ValidationError(
                    f"frame {frame.id} / instance {inst.id}: no approx mask to evaluate"
                )
            out.append(inst.approx_mask)
        return out
    assert labels_by_frame is not None
    return labels_by_frame.get(frame.id, [])


def _cmd_eval(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    source = args.labels
    labels_by_frame: dict[int, list[RleMask]] | None = None
    if source not in ("approx", "gt"):
        label_set = load_dataset(source)
        known = {f.id: f for f in dataset.frames}
        labels_by_frame = {}
        for frame in label_set.frames:
            if frame.id not in known:
                raise ValidationError(f"labels file: frame {frame.id} not in the dataset")
            ref = known[frame.id]
            if (frame.height, frame.width) != (ref.height, ref.width):
                raise ValidationError(
                    f"labels file: frame {frame.id} dims {frame.height}x{frame.width} "
                    f"differ from dataset ({ref.height}x{ref.width})"
                )
            labels_by_frame[frame.id] = [inst.gt_mask for inst in frame.instances]
        source = "file"
    tp_ious: list[float] = []
    n_pred = 0
    n_gt = 0
    for idx, frame in enumerate(dataset.frames):
        labels = _labels_for_frame(dataset, source, labels_by_frame, idx)
        gts = [inst.gt_mask for inst in frame.instances]
        matching = match_instances(labels, gts)
        tp_ious.extend(iou for _, _, iou in matching.tp_pairs)
        n_pred += len(labels)
        n_gt += len(gts)
    scores = scores_from_counts(tp_ious, n_pred, n_gt)
    result: dict[str, Any] = {
        "labels": args.labels if source != "file" else str(args.labels),
        "n_frames": len(dataset.frames),
        "n_predictions": n_pred,
        "n_ground_truth": n_gt,
        "tp": scores.tp_count,
        "fp": scores.fp_count,
        "fn": scores.fn_count,
        "sq": scores.sq,
        "rq": scores.rq,
        "pq": scores.pq,
    }
    if args.hist_bins is not None or args.hist_out:
        if source == "file":
            raise ValidationError(
                "histogram needs per-instance labels; use --labels approx or gt"
            )
        triples = []
        for frame in dataset.frames:
            overlaps = frame_overlap_scores(frame)
            for inst in frame.instances:
                label = inst.gt_mask if source == "gt" else inst.approx_mask
                assert label is not None  # checked while matching above
                triples.append((label, inst.gt_mask, overlaps[inst.id]))
        hist = correctness_by_overlap(triples, bin_width=args.hist_bins or 0.1)
        result["histogram"] = {
            "bin_edges": list(hist.bin_edges),
            "counts": list(hist.counts),
            "correct": list(hist.correct),
            "fractions": list(hist.fractions),
        }
        if args.hist_out:
            write_histogram_csv(hist, args.hist_out)
    print(json.dumps(result, sort_keys=True, indent=2))
    return 0


def _cost_model_from_args(args: argparse.Namespace) -> CostModel:
    config = load_cost_config(args.cost_config) if args.cost_config else None
    overrides = {
        "keypoints_s": args.cost_keypoints_s,
        "correct_isolated_s": args.cost_correct_isolated_s,
        "correct_overlapping_s": args.cost_correct_overlapping_s,
        "polygon_s": args.cost_polygon_s,
        "isolated_max_overlap": args.isolated_max_overlap,
    }
    return cost_model_from_sources(config, overrides)


def _cmd_order(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    strategy = StrategyId.parse(args.strategy, alpha=args.alpha)
    cost = _cost_model_from_args(args)
    schedule = build_schedule(dataset, strategy, cost, seed=args.seed)
    write_schedule_csv(schedule, args.output)
    print(
        f"wrote {len(schedule.entries)} actions ({schedule.total_s:g} s total) "
        f"to {args.output}"
    )
    return 0


def _parse_strategy_lenient(name: str, alpha: float | None) -> StrategyId:
    """Parse one of a strategy list; ``alpha`` only fills in where needed."""
    try:
        return StrategyId.parse(name)
    except ValidationError:
        if alpha is not None:
            return StrategyId.parse(name, alpha=alpha)
        raise


def _cmd_simulate(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    strategies = [
        _parse_strategy_lenient(name, args.alpha)
        for name in args.strategies.split(",")
        if name.strip()
    ]
    if not strategies:
        raise ValidationError("no strategies given")
    budgets = parse_budget_spec(args.budgets)
    cost = _cost_model_from_args(args)
    trainer = TrainerHook(args.trainer_cmd) if args.trainer_cmd else None
    points = run_campaign(
        dataset, strategies, budgets, cost=cost, seed=args.seed, trainer=trainer
    )
    write_curves_csv(points, args.output)
    print(f"wrote {len(points)} curve points to {args.output}")
    return 0


def _add_cost_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cost-config", metavar="FILE", help="TOML/JSON file with a [cost] table")
    parser.add_argument("--cost-keypoints-s", type=float, default=None, metavar="S")
    parser.add_argument("--cost-correct-isolated-s", type=float, default=None, metavar="S")
    parser.add_argument("--cost-correct-overlapping-s", type=float, default=None, metavar="S")
    parser.add_argument("--cost-polygon-s", type=float, default=None, metavar="S")
    parser.add_argument(
        "--isolated-max-overlap",
        type=float,
        default=None,
        metavar="IOU",
        help="overlap score at or below which a correction bills the isolated rate",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskbudget",
        description="Annotation budgeting for instance masks: generate, order, simulate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset")
    p_gen.add_argument("--params", metavar="FILE", help="JSON/TOML with scene/degradation sections")
    p_gen.add_argument("--seed", type=int, default=None, help="overrides the params seed")
    p_gen.add_argument("-o", "--output", required=True, metavar="FILE")
    p_gen.set_defaults(func=_cmd_gen)

    p_eval = sub.add_parser("eval", help="score labels against ground truth")
    p_eval.add_argument("--dataset", required=True, metavar="FILE")
    p_eval.add_argument(
        "--labels",
        required=True,
        metavar="approx|gt|FILE",
        help="label source: stored approx masks, ground truth, or a dataset file",
    )
    p_eval.add_argument(
        "--hist-bins",
        type=float,
        default=None,
        metavar="WIDTH",
        help="also report correctness by overlap score, binned at WIDTH",
    )
    p_eval.add_argument("--hist-out", metavar="FILE", help="write the histogram as CSV")
    p_eval.set_defaults(func=_cmd_eval)

    p_order = sub.add_parser("order", help="expand a strategy into an action schedule")
    p_order.add_argument("--dataset", required=True, metavar="FILE")
    p_order.add_argument("--strategy", required=True, metavar="NAME")
    p_order.add_argument("--alpha", type=float, default=None)
    p_order.add_argument("--seed", type=int, default=0)
    p_order.add_argument("-o", "--output", required=True, metavar="FILE")
    _add_cost_flags(p_order)
    p_order.set_defaults(func=_cmd_order)

    p_sim = sub.add_parser("simulate", help="replay strategies across a budget grid")
    p_sim.add_argument("--dataset", required=True, metavar="FILE")
    p_sim.add_argument("--strategies", required=True, metavar="A,B,...")
    p_sim.add_argument("--alpha", type=float, default=None, help="alpha for bare ALo names")
    p_sim.add_argument(
        "--budgets", required=True, metavar="SPEC", help="'start:stop:step' or 'a,b,c' seconds"
    )
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument(
        "--trainer-cmd",
        metavar="CMD",
        help="external command run per snapshot; '{snapshot}' expands to a dataset file",
    )
    p_sim.add_argument("-o", "--output", required=True, metavar="FILE")
    _add_cost_flags(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MaskBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
