"""Budget-allocation strategies: which annotation action to spend time on next.

A *schedule* is the full ordered list of annotation actions a strategy would
take on a dataset, each with its cost and running total. Strategies:

- ``FbF-M``: draw a manual polygon per instance, frame by frame in seeded
  random frame order.
- ``FbF-BB``: define NEWS keypoints per instance (approximate masks only),
  same frame order rule.
- ``FbF-BB+C``: per frame, keypoints for every instance, then a correction
  pass over the same instances, before moving to the next frame.
- ``BB4All-FC``: keypoints for the whole dataset first (dataset frame order),
  then corrections frame by frame in seeded random frame order.
- ``BB4All-IC-Oo``: keypoints for the whole dataset first, then corrections
  per instance ordered by decreasing bounding-box overlap with neighbours.
- ``BB4All-IC-ALo``: keypoints first, then corrections per instance ordered
  by increasing confidence that the approximate mask is already good, where
  confidence blends agreement with model-predicted masks and overlap.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .costs import ActionKind, AnnotationAction, CostModel, action_cost
from .dataio import Dataset, Frame
from .errors import MissingPredictionsError, ValidationError
from .masks import BoundingBox, RleMask, bbox_iou, mask_iou


class StrategyKind(enum.Enum):
    FBF_M = "FbF-M"
    FBF_BB = "FbF-BB"
    FBF_BB_C = "FbF-BB+C"
    BB4ALL_FC = "BB4All-FC"
    BB4ALL_IC_OO = "BB4All-IC-Oo"
    BB4ALL_IC_ALO = "BB4All-IC-ALo"


STRATEGY_NAMES = tuple(k.value for k in StrategyKind)


@dataclass(frozen=True)
class StrategyId:
    """A strategy kind plus its parameter, when it has one (ALo's alpha)."""

    kind: StrategyKind
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.kind is StrategyKind.BB4ALL_IC_ALO:
            if self.alpha is None:
                raise ValidationError(f"{self.kind.value} requires an alpha")
            if self.alpha < 0:
                raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        elif self.alpha is not None:
            raise ValidationError(f"{self.kind.value} takes no alpha")

    @property
    def label(self) -> str:
        if self.alpha is None:
            return self.kind.value
        return f"{self.kind.value}-alpha{self.alpha:g}"

    @classmethod
    def parse(cls, text: str, alpha: float | None = None) -> StrategyId:
        """Parse 'FbF-BB' or 'BB4All-IC-ALo-alpha0.5' style names.

        An explicit ``alpha`` argument supplies the value when the name does
        not carry an ``-alpha<value>`` suffix.
        """
        name = text.strip()
        for kind in StrategyKind:
            if name == kind.value:
                return cls(kind=kind, alpha=alpha)
            prefix = kind.value + "-alpha"
            if name.startswith(prefix):
                if alpha is not None:
                    raise ValidationError(f"alpha given twice for {name!r}")
                try:
                    return cls(kind=kind, alpha=float(name[len(prefix):]))
                except ValueError as exc:
                    raise ValidationError(f"bad alpha in strategy name {name!r}") from exc
        raise ValidationError(
            f"unknown strategy {name!r}; expected one of {', '.join(STRATEGY_NAMES)}"
        )


@dataclass(frozen=True)
class InstanceScores:
    """Per-instance quantities the instance-ordered strategies sort by."""

    iou_b: float
    iou_star: float | None = None
    alpha: float | None = None
    confidence: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.iou_b <= 1.0:
            raise ValidationError(f"iou_b out of [0, 1]: {self.iou_b}")
        if self.iou_star is not None and not 0.0 <= self.iou_star <= 1.0:
            raise ValidationError(f"iou_star out of [0, 1]: {self.iou_star}")
        if self.confidence is not None:
            if self.iou_star is None or self.alpha is None:
                raise ValidationError("confidence requires iou_star and alpha")
            expected = confidence(self.iou_star, self.iou_b, self.alpha)
            if self.confidence != expected:
                raise ValidationError(
                    f"confidence {self.confidence} inconsistent with "
                    f"iou_star={self.iou_star}, iou_b={self.iou_b}, alpha={self.alpha}"
                )


def overlap_score(index: int, boxes: list[BoundingBox]) -> float:
    """Largest bounding-box IoU between instance ``index`` and any other.

    0.0 for a lone instance: nothing overlaps it.
    """
    if not 0 <= index < len(boxes):
        raise ValidationError(f"index {index} out of range for {len(boxes)} boxes")
    own = boxes[index]
    return max(
        (bbox_iou(own, other) for k, other in enumerate(boxes) if k != index),
        default=0.0,
    )


def frame_overlap_scores(frame: Frame) -> dict[int, float]:
    """Overlap score of every instance in a frame, keyed by instance id."""
    boxes = [inst.bbox for inst in frame.instances]
    return {
        inst.id: overlap_score(k, boxes) for k, inst in enumerate(frame.instances)
    }


def model_agreement_score(mask: RleMask, candidates: list[RleMask]) -> float:
    """Best mask IoU between a label and any model-predicted mask; 0.0 if none."""
    return max((mask_iou(mask, c) for c in candidates), default=0.0)


def confidence(iou_star: float, iou_b: float, alpha: float) -> float:
    """Confidence that an approximate mask needs no correction.

    Model agreement ``iou_star`` is discounted when the instance overlaps
    neighbours (``iou_b`` high), because agreement is less trustworthy there;
    ``alpha`` sets how much extra weight isolation earns.
    """
    if not 0.0 <= iou_star <= 1.0:
        raise ValidationError(f"iou_star out of [0, 1]: {iou_star}")
    if not 0.0 <= iou_b <= 1.0:
        raise ValidationError(f"iou_b out of [0, 1]: {iou_b}")
    if alpha < 0:
        raise ValidationError(f"alpha must be >= 0, got {alpha}")
    return iou_star + alpha * iou_star * (1.0 - iou_b)


@dataclass(frozen=True)
class ScheduledAction:
    action: AnnotationAction
    cost_s: float
    cumulative_s: float
    score: float | None = None


@dataclass(frozen=True)
class Schedule:
    strategy: StrategyId
    seed: int
    entries: tuple[ScheduledAction, ...]

    def __post_init__(self) -> None:
        cumulative = 0.0
        keypointed: set[tuple[int, int]] = set()
        done: set[tuple[tuple[int, int], ActionKind]] = set()
        for entry in self.entries:
            cumulative += entry.cost_s
            if entry.cumulative_s != cumulative:
                raise ValidationError(
                    f"cumulative_s {entry.cumulative_s} != running total {cumulative}"
                )
            key = (entry.action.frame_id, entry.action.instance_id)
            if (key, entry.action.kind) in done:
                raise ValidationError(f"duplicate action {entry.action.kind.value} on {key}")
            done.add((key, entry.action.kind))
            if entry.action.kind is ActionKind.DEFINE_KEYPOINTS:
                keypointed.add(key)
            elif entry.action.kind is ActionKind.CORRECT_MASK:
                if key not in keypointed:
                    raise ValidationError(f"correction before keypoints on {key}")

    @property
    def total_s(self) -> float:
        return self.entries[-1].cumulative_s if self.entries else 0.0


def _require_approx(dataset: Dataset) -> None:
    for frame, inst in dataset.iter_instances():
        if inst.approx_mask is None:
            raise ValidationError(
                f"frame {frame.id} / instance {inst.id}: strategy needs an approx mask"
            )


def _shuffled_frames(dataset: Dataset, seed: int) -> list[Frame]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset.frames))
    return [dataset.frames[i] for i in order]


class _Builder:
    def __init__(self) -> None:
        self.entries: list[ScheduledAction] = []
        self.cumulative = 0.0

    def add(self, action: AnnotationAction, cost_s: float, score: float | None = None) -> None:
        self.cumulative += cost_s
        self.entries.append(
            ScheduledAction(
                action=action, cost_s=cost_s, cumulative_s=self.cumulative, score=score
            )
        )


def build_schedule(
    dataset: Dataset,
    strategy: StrategyId,
    cost: CostModel | None = None,
    seed: int = 0,
) -> Schedule:
    """Expand a strategy into its full, deterministic action schedule.

    The same (dataset, strategy, cost, seed) always yields the same schedule;
    the seed only drives frame-order shuffles.
    """
    cost = cost or CostModel()
    kind = strategy.kind
    overlaps = {frame.id: frame_overlap_scores(frame) for frame in dataset.frames}
    b = _Builder()

    def keypoints(frame: Frame) -> None:
        for inst in frame.instances:
            a = AnnotationAction(ActionKind.DEFINE_KEYPOINTS, frame.id, inst.id)
            b.add(a, action_cost(a, overlaps[frame.id][inst.id], cost))

    def correction(frame: Frame, inst_id: int, score: float | None = None) -> None:
        a = AnnotationAction(ActionKind.CORRECT_MASK, frame.id, inst_id)
        b.add(a, action_cost(a, overlaps[frame.id][inst_id], cost), score)

    if kind is StrategyKind.FBF_M:
        for frame in _shuffled_frames(dataset, seed):
            for inst in frame.instances:
                a = AnnotationAction(ActionKind.DRAW_POLYGON, frame.id, inst.id)
                b.add(a, action_cost(a, overlaps[frame.id][inst.id], cost))
    elif kind is StrategyKind.FBF_BB:
        _require_approx(dataset)
        for frame in _shuffled_frames(dataset, seed):
            keypoints(frame)
    elif kind is StrategyKind.FBF_BB_C:
        _require_approx(dataset)
        for frame in _shuffled_frames(dataset, seed):
            keypoints(frame)
            for inst in frame.instances:
                correction(frame, inst.id)
    elif kind is StrategyKind.BB4ALL_FC:
        _require_approx(dataset)
        for frame in dataset.frames:
            keypoints(frame)
        for frame in _shuffled_frames(dataset, seed):
            for inst in frame.instances:
                correction(frame, inst.id)
    elif kind is StrategyKind.BB4ALL_IC_OO:
        _require_approx(dataset)
        for frame in dataset.frames:
            keypoints(frame)
        ranked = sorted(
            ((frame, inst) for frame, inst in dataset.iter_instances()),
            key=lambda fi: (-overlaps[fi[0].id][fi[1].id], fi[0].id, fi[1].id),
        )
        for frame, inst in ranked:
            correction(frame, inst.id, score=overlaps[frame.id][inst.id])
    elif kind is StrategyKind.BB4ALL_IC_ALO:
        _require_approx(dataset)
        assert strategy.alpha is not None
        scores = score_instances(dataset, strategy.alpha, overlaps=overlaps)
        for frame in dataset.frames:
            keypoints(frame)
        ranked = sorted(
            ((frame, inst) for frame, inst in dataset.iter_instances()),
            key=lambda fi: (scores[(fi[0].id, fi[1].id)].confidence, fi[0].id, fi[1].id),
        )
        for frame, inst in ranked:
            correction(frame, inst.id, score=scores[(frame.id, inst.id)].confidence)
    else:  # pragma: no cover - enum is exhaustive
        raise AssertionError(kind)

    return Schedule(strategy=strategy, seed=seed, entries=tuple(b.entries))


def score_instances(
    dataset: Dataset,
    alpha: float,
    overlaps: dict[int, dict[int, float]] | None = None,
) -> dict[tuple[int, int], InstanceScores]:
    """Confidence scores for every instance, keyed by (frame id, instance id).

    Scores are computed against the dataset as stored — the predicted masks
    are frozen, so a schedule built from them never changes mid-campaign.
    Every frame must carry at least one predicted mask.
    """
    if overlaps is None:
        overlaps = {frame.id: frame_overlap_scores(frame) for frame in dataset.frames}
    out: dict[tuple[int, int], InstanceScores] = {}
    for frame in dataset.frames:
        pool = frame.predicted_pool()
        if not pool and frame.instances:
            raise MissingPredictionsError(
                f"frame {frame.id}: confidence ordering needs predicted masks"
            )
        for inst in frame.instances:
            if inst.approx_mask is None:
                raise ValidationError(
                    f"frame {frame.id} / instance {inst.id}: missing approx mask"
                )
            iou_b = overlaps[frame.id][inst.id]
            iou_star = model_agreement_score(inst.approx_mask, pool)
            out[(frame.id, inst.id)] = InstanceScores(
                iou_b=iou_b,
                iou_star=iou_star,
                alpha=alpha,
                confidence=confidence(iou_star, iou_b, alpha),
            )
    return out
