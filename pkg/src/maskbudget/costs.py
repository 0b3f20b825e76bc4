"""Annotation actions and their cost in human seconds.

Defaults are the measured per-instance averages over six annotators: 4 s to
click the four extreme points, 45 s (isolated) or 70 s (box overlapping
another instance) to correct an automatically predicted mask, and 95 s to
delineate an instance with polygons by hand.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ValidationError


class ActionKind(enum.Enum):
    DEFINE_KEYPOINTS = "define_keypoints"
    CORRECT_MASK = "correct_mask"
    DRAW_POLYGON = "draw_polygon"


@dataclass(frozen=True)
class CostModel:
    """Per-action annotation times in seconds.

    ``isolated_max_overlap`` is the bounding-box overlap up to which an
    instance still counts as isolated for correction pricing (0.0: only
    strictly disjoint boxes are isolated).
    """

    keypoints_s: float = 4.0
    correct_isolated_s: float = 45.0
    correct_overlapping_s: float = 70.0
    polygon_s: float = 95.0
    isolated_max_overlap: float = 0.0

    def __post_init__(self) -> None:
        for name in ("keypoints_s", "correct_isolated_s", "correct_overlapping_s", "polygon_s"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be strictly positive")
        if self.correct_overlapping_s < self.correct_isolated_s:
            raise ValidationError("overlapping correction cannot be cheaper than isolated")
        if not 0.0 <= self.isolated_max_overlap < 1.0:
            raise ValidationError("isolated_max_overlap must be in [0, 1)")


@dataclass(frozen=True)
class AnnotationAction:
    kind: ActionKind
    frame_id: int
    instance_id: int


def action_cost(a: AnnotationAction, overlap: float, model: CostModel) -> float:
    """Seconds charged for one action; correction price depends on whether the
    instance's bounding box overlaps another instance's."""
    if not 0.0 <= overlap <= 1.0:
        raise ValidationError(f"overlap {overlap} outside [0, 1]")
    if a.kind is ActionKind.DEFINE_KEYPOINTS:
        return model.keypoints_s
    if a.kind is ActionKind.DRAW_POLYGON:
        return model.polygon_s
    if overlap <= model.isolated_max_overlap:
        return model.correct_isolated_s
    return model.correct_overlapping_s
