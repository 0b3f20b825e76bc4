"""Replay annotation schedules under time budgets and score the result.

A *snapshot* is the label state after spending a given budget: the longest
prefix of the schedule whose cumulative cost fits. Labels evolve as

    Unlabeled -> ApproxMask -> CorrectedMask        (keypoints, correction)
    Unlabeled -> PolygonMask                        (manual polygon)

where an approximate mask is the instance's stored ``approx_mask`` and a
corrected or polygon label equals the ground truth exactly. Snapshot quality
is measured over *labeled* frames only (frames with at least one labeled
instance); unlabeled instances inside those frames still count against
recognition quality as misses. When nothing is labeled yet the quality
metrics are absent, not zero.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .costs import ActionKind, CostModel
from .dataio import Dataset, Frame, InstanceRecord, make_instance, write_dataset
from .errors import MaskBudgetError, ValidationError
from .masks import RleMask, mask_iou
from .metrics import CORRECT_IOU, match_from_ious, scores_from_counts
from .strategies import Schedule, ScheduledAction, StrategyId, build_schedule

InstanceKey = tuple[int, int]  # (frame id, instance id)


class LabelState:
    """Possible annotation states of one instance."""

    UNLABELED = "unlabeled"
    APPROX_MASK = "approx_mask"
    CORRECTED_MASK = "corrected_mask"
    POLYGON_MASK = "polygon_mask"


@dataclass(frozen=True)
class LabelSnapshot:
    """Label state after the schedule prefix affordable under ``budget_s``."""

    budget_s: float
    consumed_s: float
    n_actions: int
    states: Mapping[InstanceKey, str]

    def state(self, frame_id: int, instance_id: int) -> str:
        return self.states.get((frame_id, instance_id), LabelState.UNLABELED)

    def labeled_frame_ids(self) -> set[int]:
        return {fid for fid, _ in self.states}


def active_label_mask(inst: InstanceRecord, state: str) -> RleMask | None:
    """The mask the annotator has produced so far for this instance, if any."""
    if state == LabelState.APPROX_MASK:
        if inst.approx_mask is None:
            raise ValidationError(f"instance {inst.id} has no approx mask to use as label")
        return inst.approx_mask
    if state in (LabelState.CORRECTED_MASK, LabelState.POLYGON_MASK):
        return inst.gt_mask
    return None


def _dataset_index(dataset: Dataset) -> dict[int, dict[int, InstanceRecord]]:
    return {f.id: {i.id: i for i in f.instances} for f in dataset.frames}


def _apply_action(
    entry: ScheduledAction,
    states: dict[InstanceKey, str],
    index: dict[int, dict[int, InstanceRecord]],
) -> None:
    a = entry.action
    key = (a.frame_id, a.instance_id)
    inst = index.get(a.frame_id, {}).get(a.instance_id)
    if inst is None:
        raise ValidationError(
            f"schedule refers to unknown frame {a.frame_id} / instance {a.instance_id}"
        )
    state = states.get(key, LabelState.UNLABELED)
    if a.kind is ActionKind.DEFINE_KEYPOINTS:
        if state != LabelState.UNLABELED:
            raise ValidationError(f"keypoints on already-labeled instance {key}")
        if inst.approx_mask is None:
            raise ValidationError(
                f"frame {a.frame_id} / instance {a.instance_id}: keypoints need an approx mask"
            )
        states[key] = LabelState.APPROX_MASK
    elif a.kind is ActionKind.CORRECT_MASK:
        if state != LabelState.APPROX_MASK:
            raise ValidationError(f"correction without a prior approx label on {key}")
        states[key] = LabelState.CORRECTED_MASK
    else:
        if state != LabelState.UNLABELED:
            raise ValidationError(f"polygon on already-labeled instance {key}")
        states[key] = LabelState.POLYGON_MASK


def label_snapshot(dataset: Dataset, schedule: Schedule, budget_s: float) -> LabelSnapshot:
    """Replay the affordable schedule prefix; an action runs only if its
    cumulative cost stays within the budget."""
    if budget_s < 0:
        raise ValidationError(f"budget must be >= 0, got {budget_s}")
    index = _dataset_index(dataset)
    states: dict[InstanceKey, str] = {}
    consumed = 0.0
    n = 0
    for entry in schedule.entries:
        if entry.cumulative_s > budget_s:
            break
        _apply_action(entry, states, index)
        consumed = entry.cumulative_s
        n += 1
    return LabelSnapshot(budget_s=budget_s, consumed_s=consumed, n_actions=n, states=states)


class FrameIouCache:
    """Per-frame IoU matrices, computed lazily and shared across budgets.

    ``approx(frame)[i][j]`` is IoU(approx mask of instance i, gt of j) and
    ``gt(frame)[i][j]`` the same for ground-truth labels; both are indexed by
    instance *position* in the frame, not id.
    """

    def __init__(self) -> None:
        self._approx: dict[int, np.ndarray] = {}
        self._gt: dict[int, np.ndarray] = {}

    def approx(self, frame: Frame) -> np.ndarray:
        if frame.id not in self._approx:
            n = len(frame.instances)
            m = np.zeros((n, n))
            for i, a in enumerate(frame.instances):
                if a.approx_mask is None:
                    continue  # row stays zero; never read for unlabeled states
                for j, g in enumerate(frame.instances):
                    m[i, j] = mask_iou(a.approx_mask, g.gt_mask)
            self._approx[frame.id] = m
        return self._approx[frame.id]

    def gt(self, frame: Frame) -> np.ndarray:
        if frame.id not in self._gt:
            n = len(frame.instances)
            m = np.eye(n)
            for i in range(n):
                for j in range(i + 1, n):
                    v = mask_iou(frame.instances[i].gt_mask, frame.instances[j].gt_mask)
                    m[i, j] = m[j, i] = v
            self._gt[frame.id] = m
        return self._gt[frame.id]

    def label_iou(self, frame: Frame, position: int, state: str) -> float:
        if state == LabelState.APPROX_MASK:
            return float(self.approx(frame)[position, position])
        return 1.0


@dataclass(frozen=True)
class SnapshotQuality:
    n_instances_labeled: int
    n_frames_labeled: int
    mean_label_iou: float | None
    frac_correct: float | None
    label_pq: float | None
    label_sq: float | None
    label_rq: float | None


def snapshot_quality(
    snapshot: LabelSnapshot, dataset: Dataset, cache: FrameIouCache | None = None
) -> SnapshotQuality:
    """Score a snapshot's labels against ground truth over labeled frames."""
    cache = cache or FrameIouCache()
    n_labeled = 0
    n_frames = 0
    iou_sum = 0.0
    n_correct = 0
    tp_ious: list[float] = []
    n_pred_total = 0
    n_gt_total = 0
    for frame in dataset.frames:
        positions = [
            (pos, snapshot.state(frame.id, inst.id))
            for pos, inst in enumerate(frame.instances)
        ]
        labeled = [(pos, st) for pos, st in positions if st != LabelState.UNLABELED]
        if not labeled:
            continue
        n_frames += 1
        rows = []
        for pos, st in labeled:
            iou = cache.label_iou(frame, pos, st)
            n_labeled += 1
            iou_sum += iou
            if iou > CORRECT_IOU:
                n_correct += 1
            matrix = cache.approx(frame) if st == LabelState.APPROX_MASK else cache.gt(frame)
            rows.append([float(v) for v in matrix[pos]])
        matching = match_from_ious(rows, len(frame.instances))
        tp_ious.extend(iou for _, _, iou in matching.tp_pairs)
        n_pred_total += len(labeled)
        n_gt_total += len(frame.instances)
    if n_labeled == 0:
        return SnapshotQuality(
            n_instances_labeled=0,
            n_frames_labeled=0,
            mean_label_iou=None,
            frac_correct=None,
            label_pq=None,
            label_sq=None,
            label_rq=None,
        )
    scores = scores_from_counts(tp_ious, n_pred_total, n_gt_total)
    return SnapshotQuality(
        n_instances_labeled=n_labeled,
        n_frames_labeled=n_frames,
        mean_label_iou=iou_sum / n_labeled,
        frac_correct=n_correct / n_labeled,
        label_pq=scores.pq,
        label_sq=scores.sq,
        label_rq=scores.rq,
    )


@dataclass(frozen=True)
class CurvePoint:
    """One row of a quality-versus-budget curve."""

    strategy: str
    alpha: float | None
    seed: int
    budget_s: float
    n_instances_labeled: int
    n_frames_labeled: int
    mean_label_iou: float | None
    frac_correct: float | None
    label_pq: float | None
    label_sq: float | None
    label_rq: float | None
    trainer_quality: float | None = None

    @property
    def budget_h(self) -> float:
        return self.budget_s / 3600.0


@dataclass(frozen=True)
class TrainerHook:
    """External trainer invoked per snapshot; must print a quality float.

    ``command`` is a shell-style template; every ``{snapshot}`` is replaced
    with the path of a dataset-format JSON file holding the snapshot's active
    labels. Without a placeholder the path is appended as the last argument.
    The last non-empty line of stdout is parsed as the quality value.
    """

    command: str

    def run(self, snapshot_path: Path) -> float:
        parts = shlex.split(self.command)
        if not parts:
            raise ValidationError("trainer command is empty")
        if any("{snapshot}" in p for p in parts):
            argv = [p.replace("{snapshot}", str(snapshot_path)) for p in parts]
        else:
            argv = parts + [str(snapshot_path)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, check=False)
        except OSError as exc:
            raise MaskBudgetError(f"trainer command failed to start: {exc}") from exc
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-1:] or ["(no stderr)"]
            raise MaskBudgetError(
                f"trainer command exited with {proc.returncode}: {tail[0]}"
            )
        lines = [ln.strip() for ln in proc.stdout.splitlines() if ln.strip()]
        if not lines:
            raise MaskBudgetError("trainer command printed no output")
        try:
            return float(lines[-1])
        except ValueError as exc:
            raise MaskBudgetError(
                f"trainer output is not a number: {lines[-1]!r}"
            ) from exc


def export_snapshot(dataset: Dataset, snapshot: LabelSnapshot, path: str | Path) -> None:
    """Write the snapshot's active labels as a dataset-format JSON file.

    Only labeled frames and instances appear; each instance's ground truth is
    its current label mask, so the file stands alone as a training dataset.
    """
    frames = []
    for frame in dataset.frames:
        records = []
        for inst in frame.instances:
            mask = active_label_mask(inst, snapshot.state(frame.id, inst.id))
            if mask is not None:
                records.append(make_instance(inst.id, mask))
        if records:
            frames.append(
                Frame(
                    id=frame.id,
                    height=frame.height,
                    width=frame.width,
                    instances=tuple(records),
                )
            )
    write_dataset(Dataset(frames=tuple(frames)), path)


def run_campaign(
    dataset: Dataset,
    strategies: Sequence[StrategyId],
    budgets: Sequence[float],
    cost: CostModel | None = None,
    seed: int = 0,
    trainer: TrainerHook | None = None,
    workdir: str | Path | None = None,
) -> list[CurvePoint]:
    """Simulate each strategy across the budget grid.

    Budgets must be sorted ascending; snapshots are replayed incrementally,
    so a sweep costs one schedule pass per strategy regardless of grid size.
    Frame-level IoU matrices are cached across strategies and budgets.
    """
    if not strategies:
        raise ValidationError("no strategies given")
    if not budgets:
        raise ValidationError("no budgets given")
    if any(b < 0 for b in budgets):
        raise ValidationError("budgets must be >= 0")
    if any(b2 < b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValidationError("budgets must be sorted ascending")
    cache = FrameIouCache()
    index = _dataset_index(dataset)
    points: list[CurvePoint] = []
    tmp: tempfile.TemporaryDirectory | None = None
    if trainer is not None and workdir is None:
        tmp = tempfile.TemporaryDirectory(prefix="maskbudget_")
        workdir = tmp.name
    try:
        for strategy in strategies:
            schedule = build_schedule(dataset, strategy, cost, seed)
            states: dict[InstanceKey, str] = {}
            consumed = 0.0
            k = 0
            for budget in budgets:
                while k < len(schedule.entries) and schedule.entries[k].cumulative_s <= budget:
                    _apply_action(schedule.entries[k], states, index)
                    consumed = schedule.entries[k].cumulative_s
                    k += 1
                snap = LabelSnapshot(
                    budget_s=budget, consumed_s=consumed, n_actions=k, states=dict(states)
                )
                quality = snapshot_quality(snap, dataset, cache)
                trainer_quality = None
                if trainer is not None and quality.n_instances_labeled > 0:
                    name = f"snapshot_{strategy.label}_{budget:g}.json".replace("+", "p")
                    snap_path = Path(workdir) / name
                    export_snapshot(dataset, snap, snap_path)
                    trainer_quality = trainer.run(snap_path)
                points.append(
                    CurvePoint(
                        strategy=strategy.kind.value,
                        alpha=strategy.alpha,
                        seed=seed,
                        budget_s=budget,
                        n_instances_labeled=quality.n_instances_labeled,
                        n_frames_labeled=quality.n_frames_labeled,
                        mean_label_iou=quality.mean_label_iou,
                        frac_correct=quality.frac_correct,
                        label_pq=quality.label_pq,
                        label_sq=quality.label_sq,
                        label_rq=quality.label_rq,
                        trainer_quality=trainer_quality,
                    )
                )
    finally:
        if tmp is not None:
            tmp.cleanup()
    return points
