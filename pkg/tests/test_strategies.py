import numpy as np
import pytest

from conftest import frame_of_rects, rect

from maskbudget.costs import ActionKind, AnnotationAction, CostModel
from maskbudget.dataio import Dataset
from maskbudget.errors import MissingPredictionsError, ValidationError
from maskbudget.masks import BoundingBox, rle_encode
from maskbudget.strategies import (
    InstanceScores,
    Schedule,
    ScheduledAction,
    StrategyId,
    StrategyKind,
    build_schedule,
    confidence,
    frame_overlap_scores,
    model_agreement_score,
    overlap_score,
    score_instances,
)
from maskbudget.synth import SceneParams, generate_dataset


# --- scores ------------------------------------------------------------------


def test_overlap_score_singleton_is_zero():
    assert overlap_score(0, [BoundingBox(0, 0, 5, 5)]) == 0.0


def test_overlap_score_excludes_self():
    boxes = [BoundingBox(0, 0, 9, 9), BoundingBox(0, 5, 9, 14)]
    # identical boxes would give 1.0 against themselves; must not happen
    v = overlap_score(0, boxes)
    assert 0.0 < v < 1.0
    assert v == overlap_score(1, boxes)


def test_overlap_score_takes_worst_neighbour():
    boxes = [
        BoundingBox(0, 0, 9, 9),
        BoundingBox(0, 8, 9, 17),  # thin overlap with 0
        BoundingBox(0, 2, 9, 11),  # strong overlap with 0
    ]
    v01 = overlap_score(0, boxes[:2])
    v = overlap_score(0, boxes)
    assert v > v01


def test_overlap_score_index_checked():
    with pytest.raises(ValidationError):
        overlap_score(2, [BoundingBox(0, 0, 1, 1)])


def test_frame_overlap_scores_match_pairwise(tiny_dataset):
    f = tiny_dataset.frames[0]
    scores = frame_overlap_scores(f)
    boxes = [i.bbox for i in f.instances]
    for k, inst in enumerate(f.instances):
        assert scores[inst.id] == overlap_score(k, boxes)
    assert scores[2] == 0.0  # the loner


def test_model_agreement_no_candidates_is_zero():
    m = rect(8, 8, 0, 0, 3, 3)
    assert model_agreement_score(m, []) == 0.0


def test_model_agreement_takes_best():
    m = rect(8, 8, 0, 0, 3, 3)
    far = rect(8, 8, 5, 5, 7, 7)
    close = rect(8, 8, 0, 0, 3, 2)
    v = model_agreement_score(m, [far, close])
    assert v == pytest.approx(12 / 16)


def test_confidence_formula():
    assert confidence(0.8, 0.0, 1.0) == pytest.approx(1.6)
    assert confidence(0.8, 1.0, 1.0) == pytest.approx(0.8)
    assert confidence(0.8, 0.5, 0.0) == pytest.approx(0.8)
    assert confidence(0.0, 0.3, 2.0) == 0.0


def test_confidence_validation():
    with pytest.raises(ValidationError):
        confidence(1.2, 0.0, 1.0)
    with pytest.raises(ValidationError):
        confidence(0.5, -0.1, 1.0)
    with pytest.raises(ValidationError):
        confidence(0.5, 0.5, -1.0)


def test_instance_scores_consistency_enforced():
    InstanceScores(iou_b=0.2, iou_star=0.5, alpha=1.0, confidence=confidence(0.5, 0.2, 1.0))
    with pytest.raises(ValidationError):
        InstanceScores(iou_b=0.2, iou_star=0.5, alpha=1.0, confidence=0.99)
    with pytest.raises(ValidationError):
        InstanceScores(iou_b=1.5)


# --- strategy names ----------------------------------------------------------


def test_parse_all_plain_names():
    for kind in StrategyKind:
        if kind is StrategyKind.BB4ALL_IC_ALO:
            continue
        sid = StrategyId.parse(kind.value)
        assert sid.kind is kind and sid.alpha is None
        assert sid.label == kind.value


def test_parse_alpha_suffix():
    sid = StrategyId.parse("BB4All-IC-ALo-alpha0.5")
    assert sid.kind is StrategyKind.BB4ALL_IC_ALO
    assert sid.alpha == 0.5
    assert sid.label == "BB4All-IC-ALo-alpha0.5"


def test_parse_alpha_argument():
    sid = StrategyId.parse("BB4All-IC-ALo", alpha=2.0)
    assert sid.alpha == 2.0


def test_parse_errors():
    with pytest.raises(ValidationError):
        StrategyId.parse("BB4All-IC-ALo")  # needs alpha
    with pytest.raises(ValidationError):
        StrategyId.parse("FbF-BB", alpha=1.0)  # takes none
    with pytest.raises(ValidationError):
        StrategyId.parse("nope")
    with pytest.raises(ValidationError):
        StrategyId.parse("BB4All-IC-ALo-alpha0.5", alpha=1.0)


# --- schedules ---------------------------------------------------------------


def kinds(schedule):
    return [e.action.kind for e in schedule.entries]


def keys(schedule, kind=None):
    return [
        (e.action.frame_id, e.action.instance_id)
        for e in schedule.entries
        if kind is None or e.action.kind is kind
    ]


def test_fbf_m_draws_one_polygon_per_instance(tiny_dataset):
    s = build_schedule(tiny_dataset, StrategyId.parse("FbF-M"), seed=0)
    assert all(k is ActionKind.DRAW_POLYGON for k in kinds(s))
    assert sorted(keys(s)) == sorted((f.id, i.id) for f, i in tiny_dataset.iter_instances())
    assert all(e.cost_s == 95.0 for e in s.entries)
    assert s.total_s == 95.0 * tiny_dataset.n_instances


def test_fbf_m_works_without_approx_masks():
    f = frame_of_rects(0, 16, 16, [(0, 0, 5, 5)], approx=None)
    s = build_schedule(Dataset(frames=(f,)), StrategyId.parse("FbF-M"), seed=0)
    assert len(s.entries) == 1


def test_fbf_bb_costs_exactly_4_per_instance(tiny_dataset):
    s = build_schedule(tiny_dataset, StrategyId.parse("FbF-BB"), seed=3)
    assert all(k is ActionKind.DEFINE_KEYPOINTS for k in kinds(s))
    assert s.total_s == 4.0 * tiny_dataset.n_instances


def test_fbf_strategies_share_frame_order_for_a_seed(synth_dataset):
    m = build_schedule(synth_dataset, StrategyId.parse("FbF-M"), seed=5)
    bb = build_schedule(synth_dataset, StrategyId.parse("FbF-BB"), seed=5)
    frames_m = [fid for fid, _ in keys(m)]
    frames_bb = [fid for fid, _ in keys(bb)]
    assert frames_m == frames_bb


def test_seed_changes_frame_order(synth_dataset):
    a = build_schedule(synth_dataset, StrategyId.parse("FbF-BB"), seed=0)
    b = build_schedule(synth_dataset, StrategyId.parse("FbF-BB"), seed=1)
    assert keys(a) != keys(b)
    assert sorted(keys(a)) == sorted(keys(b))


def test_schedules_are_deterministic(synth_dataset):
    for name in ("FbF-M", "FbF-BB+C", "BB4All-FC", "BB4All-IC-Oo", "BB4All-IC-ALo-alpha1"):
        sid = StrategyId.parse(name)
        assert build_schedule(synth_dataset, sid, seed=7) == build_schedule(
            synth_dataset, sid, seed=7
        )


def test_fbf_bb_c_interleaves_per_frame(tiny_dataset):
    s = build_schedule(tiny_dataset, StrategyId.parse("FbF-BB+C"), seed=1)
    # each frame must finish (keypoints then corrections) before the next starts
    seq = [(e.action.frame_id, e.action.kind) for e in s.entries]
    seen_frames = []
    for fid, _ in seq:
        if not seen_frames or seen_frames[-1] != fid:
            seen_frames.append(fid)
    assert len(seen_frames) == len(tiny_dataset.frames)  # no frame revisited
    for frame in tiny_dataset.frames:
        ops = [k for fid, k in seq if fid == frame.id]
        n = len(frame.instances)
        assert ops == [ActionKind.DEFINE_KEYPOINTS] * n + [ActionKind.CORRECT_MASK] * n


def test_bb4all_keypoints_precede_all_corrections(tiny_dataset):
    for name in ("BB4All-FC", "BB4All-IC-Oo", "BB4All-IC-ALo-alpha0"):
        s = build_schedule(tiny_dataset, StrategyId.parse(name), seed=2)
        ks = kinds(s)
        n = tiny_dataset.n_instances
        assert ks[:n] == [ActionKind.DEFINE_KEYPOINTS] * n
        assert ks[n:] == [ActionKind.CORRECT_MASK] * n
        # keypoints phase follows dataset frame order, not the shuffle
        assert keys(s, ActionKind.DEFINE_KEYPOINTS) == [
            (f.id, i.id) for f, i in tiny_dataset.iter_instances()
        ]


def test_oo_orders_corrections_by_descending_overlap(synth_dataset):
    s = build_schedule(synth_dataset, StrategyId.parse("BB4All-IC-Oo"), seed=0)
    overlaps = {f.id: frame_overlap_scores(f) for f in synth_dataset.frames}
    corr = [e for e in s.entries if e.action.kind is ActionKind.CORRECT_MASK]
    values = [overlaps[e.action.frame_id][e.action.instance_id] for e in corr]
    assert all(a >= b for a, b in zip(values, values[1:]))
    # ties broken by (frame, instance)
    for a, b in zip(corr, corr[1:]):
        ka = overlaps[a.action.frame_id][a.action.instance_id]
        kb = overlaps[b.action.frame_id][b.action.instance_id]
        if ka == kb:
            assert (a.action.frame_id, a.action.instance_id) < (
                b.action.frame_id,
                b.action.instance_id,
            )
    assert all(e.score == overlaps[e.action.frame_id][e.action.instance_id] for e in corr)


def test_alo_orders_corrections_by_ascending_confidence(synth_dataset):
    sid = StrategyId.parse("BB4All-IC-ALo-alpha1")
    s = build_schedule(synth_dataset, sid, seed=0)
    scores = score_instances(synth_dataset, 1.0)
    corr = [e for e in s.entries if e.action.kind is ActionKind.CORRECT_MASK]
    values = [scores[(e.action.frame_id, e.action.instance_id)].confidence for e in corr]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_alo_alpha_zero_equals_ascending_model_agreement(synth_dataset):
    s = build_schedule(synth_dataset, StrategyId.parse("BB4All-IC-ALo-alpha0"), seed=0)
    scores = score_instances(synth_dataset, 0.0)
    expected = sorted(
        scores.keys(), key=lambda k: (scores[k].iou_star, k[0], k[1])
    )
    assert keys(s, ActionKind.CORRECT_MASK) == expected


def test_alo_requires_predictions():
    f = frame_of_rects(0, 16, 16, [(0, 0, 5, 5)], approx="same", preds=0)
    with pytest.raises(MissingPredictionsError):
        build_schedule(Dataset(frames=(f,)), StrategyId.parse("BB4All-IC-ALo-alpha1"))


def test_correction_strategies_require_approx():
    f = frame_of_rects(0, 16, 16, [(0, 0, 5, 5)], approx=None)
    ds = Dataset(frames=(f,))
    for name in ("FbF-BB", "FbF-BB+C", "BB4All-FC", "BB4All-IC-Oo"):
        with pytest.raises(ValidationError):
            build_schedule(ds, StrategyId.parse(name))


def test_correction_cost_tracks_overlap(tiny_dataset):
    s = build_schedule(tiny_dataset, StrategyId.parse("BB4All-FC"), seed=0)
    overlaps = {f.id: frame_overlap_scores(f) for f in tiny_dataset.frames}
    for e in s.entries:
        if e.action.kind is ActionKind.CORRECT_MASK:
            expected = 45.0 if overlaps[e.action.frame_id][e.action.instance_id] == 0.0 else 70.0
            assert e.cost_s == expected


def test_custom_cost_model_applies(tiny_dataset):
    cost = CostModel(keypoints_s=1.0, correct_isolated_s=10.0, correct_overlapping_s=20.0, polygon_s=30.0)
    s = build_schedule(tiny_dataset, StrategyId.parse("FbF-M"), cost=cost)
    assert all(e.cost_s == 30.0 for e in s.entries)


def test_cumulative_is_running_total(synth_dataset):
    s = build_schedule(synth_dataset, StrategyId.parse("BB4All-IC-Oo"), seed=0)
    acc = 0.0
    for e in s.entries:
        acc += e.cost_s
        assert e.cumulative_s == acc
        assert e.cost_s > 0


def test_schedule_rejects_correction_before_keypoints():
    a = AnnotationAction(ActionKind.CORRECT_MASK, 0, 0)
    with pytest.raises(ValidationError):
        Schedule(
            strategy=StrategyId.parse("BB4All-FC"),
            seed=0,
            entries=(ScheduledAction(action=a, cost_s=70.0, cumulative_s=70.0),),
        )


def test_schedule_rejects_duplicate_actions():
    a = AnnotationAction(ActionKind.DEFINE_KEYPOINTS, 0, 0)
    with pytest.raises(ValidationError):
        Schedule(
            strategy=StrategyId.parse("FbF-BB"),
            seed=0,
            entries=(
                ScheduledAction(action=a, cost_s=4.0, cumulative_s=4.0),
                ScheduledAction(action=a, cost_s=4.0, cumulative_s=8.0),
            ),
        )


def test_schedule_rejects_wrong_cumulative():
    a = AnnotationAction(ActionKind.DEFINE_KEYPOINTS, 0, 0)
    with pytest.raises(ValidationError):
        Schedule(
            strategy=StrategyId.parse("FbF-BB"),
            seed=0,
            entries=(ScheduledAction(action=a, cost_s=4.0, cumulative_s=5.0),),
        )


def test_empty_dataset_gives_empty_schedule():
    s = build_schedule(Dataset(), StrategyId.parse("FbF-BB"))
    assert s.entries == () and s.total_s == 0.0


def test_ordering_invariants_over_random_datasets():
    """Oo non-increasing, ALo non-decreasing, on many generated datasets."""
    for seed in range(8):
        ds, _ = generate_dataset(
            SceneParams(n_frames=4, seed=seed, overlap_pressure=0.7, instances_per_frame=(2, 4))
        )
        oo = build_schedule(ds, StrategyId.parse("BB4All-IC-Oo"), seed=seed)
        ov = [e.score for e in oo.entries if e.action.kind is ActionKind.CORRECT_MASK]
        assert all(a >= b for a, b in zip(ov, ov[1:]))
        alo = build_schedule(ds, StrategyId.parse("BB4All-IC-ALo-alpha1"), seed=seed)
        cv = [e.score for e in alo.entries if e.action.kind is ActionKind.CORRECT_MASK]
        assert all(a <= b for a, b in zip(cv, cv[1:]))
