"""Annotation budgeting for instance segmentation.

Estimate what a labeling campaign buys you per hour: RLE mask geometry,
recognition/segmentation quality metrics, a per-action cost model, budget
allocation strategies, a campaign simulator, and a synthetic scene generator
to exercise it all.
"""

from .costs import ActionKind, AnnotationAction, CostModel, action_cost
from .dataio import (
    Dataset,
    Frame,
    InstanceRecord,
    load_dataset,
    make_instance,
    parse_budget_spec,
    validate_dataset,
    write_curves_csv,
    write_dataset,
    write_histogram_csv,
    write_schedule_csv,
)
from .errors import (
    DimensionError,
    EmptyMaskError,
    GenerationError,
    InvalidPolygonError,
    MaskBudgetError,
    MissingPredictionsError,
    SchemaError,
    ValidationError,
)
from .masks import (
    BoundingBox,
    NewsKeypoints,
    PolygonSet,
    RleMask,
    bbox_iou,
    extract_news,
    intersection_area,
    mask_bbox,
    mask_iou,
    rasterize_polygons,
    rle_decode,
    rle_encode,
)
from .metrics import (
    CORRECT_IOU,
    MATCH_THRESHOLD,
    Matching,
    OverlapHistogram,
    PanopticScores,
    correctness_by_overlap,
    match_from_ious,
    match_instances,
    panoptic_quality,
    scores_from_counts,
)
from .simulate import (
    CurvePoint,
    FrameIouCache,
    LabelSnapshot,
    LabelState,
    SnapshotQuality,
    TrainerHook,
    active_label_mask,
    export_snapshot,
    label_snapshot,
    run_campaign,
    snapshot_quality,
)
from .strategies import (
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
from .synth import (
    DegradationModel,
    SceneParams,
    degrade_mask,
    generate_dataset,
    generate_scene,
    perturb_masks,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
