"""Instance matching and the SQ/RQ/PQ quality scores.

A predicted mask is a true positive when its IoU with a ground-truth mask
reaches the match threshold (0.5 by default, inclusive). Matching is greedy
in descending IoU with a one-to-one constraint; SQ is the mean IoU over TP
pairs, RQ the F1 score ``2|TP| / (n_pred + n_gt)``, and PQ their product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError
from .masks import RleMask, mask_iou

CORRECT_IOU = 0.6  # an instance label counts as correct when IoU > this
MATCH_THRESHOLD = 0.5


@dataclass(frozen=True)
class Matching:
    """One-to-one assignment between predictions and ground truth.

    ``tp_pairs`` holds (prediction index, gt index, iou) triples; ``fp`` and
    ``fn`` are the unmatched prediction/gt indices, ascending.
    """

    tp_pairs: tuple[tuple[int, int, float], ...]
    fp: tuple[int, ...]
    fn: tuple[int, ...]


@dataclass(frozen=True)
class PanopticScores:
    sq: float
    rq: float
    pq: float
    tp_count: int
    fp_count: int
    fn_count: int


@dataclass(frozen=True)
class OverlapHistogram:
    """Per-bin correctness of labels, binned by bounding-box overlap.

    ``fractions[i]`` is the share of bin ``i`` instances whose label IoU
    exceeds :data:`CORRECT_IOU`; empty bins report 0.0 and can be told apart
    by ``counts``.
    """

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    correct: tuple[int, ...]
    fractions: tuple[float, ...]


def match_instances(
    predictions: Sequence[RleMask],
    ground_truth: Sequence[RleMask],
    threshold: float = MATCH_THRESHOLD,
) -> Matching:
    """Greedily match predictions to ground truth in descending IoU order.

    Pairs with IoU below ``threshold`` are never matched. Ties are broken by
    (prediction index, gt index) so the result is deterministic.
    """
    ious = [[mask_iou(pred, gt) for gt in ground_truth] for pred in predictions]
    return match_from_ious(ious, len(ground_truth), threshold)


def match_from_ious(
    ious: Sequence[Sequence[float]],
    n_ground_truth: int,
    threshold: float = MATCH_THRESHOLD,
) -> Matching:
    """Greedy matching from a precomputed ``ious[prediction][gt]`` matrix."""
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"match threshold must be in (0, 1], got {threshold}")
    candidates = []
    for p_idx, row in enumerate(ious):
        if len(row) != n_ground_truth:
            raise ValidationError(
                f"iou row {p_idx} has {len(row)} entries, expected {n_ground_truth}"
            )
        for g_idx in range(n_ground_truth):
            iou = row[g_idx]
            if iou >= threshold:
                candidates.append((p_idx, g_idx, iou))
    candidates.sort(key=lambda c: (-c[2], c[0], c[1]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    tp = []
    for p_idx, g_idx, iou in candidates:
        if p_idx in used_p or g_idx in used_g:
            continue
        used_p.add(p_idx)
        used_g.add(g_idx)
        tp.append((p_idx, g_idx, iou))
    fp = tuple(i for i in range(len(ious)) if i not in used_p)
    fn = tuple(j for j in range(n_ground_truth) if j not in used_g)
    return Matching(tp_pairs=tuple(tp), fp=fp, fn=fn)


def scores_from_counts(
    tp_ious: Sequence[float], n_predictions: int, n_ground_truth: int
) -> PanopticScores:
    """SQ/RQ/PQ from raw TP IoUs and set sizes (also used for aggregation)."""
    tp = len(tp_ious)
    if tp > min(n_predictions, n_ground_truth):
        raise ValidationError(
            f"{tp} TP pairs inconsistent with {n_predictions} predictions / "
            f"{n_ground_truth} ground-truth instances"
        )
    if tp:
        sq = sum(tp_ious) / tp
    else:
        # Vacuously perfect when there was nothing to find, else a miss.
        sq = 1.0 if n_predictions == 0 and n_ground_truth == 0 else 0.0
    denom = n_predictions + n_ground_truth
    rq = 1.0 if denom == 0 else 2 * tp / denom
    return PanopticScores(
        sq=sq,
        rq=rq,
        pq=sq * rq,
        tp_count=tp,
        fp_count=n_predictions - tp,
        fn_count=n_ground_truth - tp,
    )


def panoptic_quality(m: Matching, n_predictions: int, n_ground_truth: int) -> PanopticScores:
    """Evaluate SQ, RQ and PQ for a matching."""
    if len(m.tp_pairs) + len(m.fp) != n_predictions or len(m.tp_pairs) + len(m.fn) != n_ground_truth:
        raise ValidationError("matching is inconsistent with the stated set sizes")
    return scores_from_counts([iou for _, _, iou in m.tp_pairs], n_predictions, n_ground_truth)


def correctness_by_overlap(
    instances: Sequence[tuple[RleMask, RleMask, float]],
    bin_width: float = 0.1,
) -> OverlapHistogram:
    """Histogram of label correctness (IoU > 0.6) by bounding-box overlap.

    ``instances`` holds (label mask, gt mask, overlap score) triples; each is
    binned by its overlap score into bins of ``bin_width`` over [0, 1], the
    last bin closed at 1.0.
    """
    if not instances:
        raise ValidationError("cannot build a histogram from zero instances")
    n_bins = round(1.0 / bin_width)
    if n_bins < 1 or abs(n_bins * bin_width - 1.0) > 1e-9:
        raise ValidationError(f"bin width {bin_width} does not divide 1 evenly")
    counts = [0] * n_bins
    correct = [0] * n_bins
    for label, gt, overlap in instances:
        if not 0.0 <= overlap <= 1.0:
            raise ValidationError(f"overlap score {overlap} outside [0, 1]")
        idx = min(n_bins - 1, int(overlap * n_bins + 1e-9))
        counts[idx] += 1
        if mask_iou(label, gt) > CORRECT_IOU:
            correct[idx] += 1
    fractions = [c / n if n else 0.0 for c, n in zip(correct, counts)]
    edges = tuple(i / n_bins for i in range(n_bins + 1))
    return OverlapHistogram(
        bin_edges=edges,
        counts=tuple(counts),
        correct=tuple(correct),
        fractions=tuple(fractions),
    )
