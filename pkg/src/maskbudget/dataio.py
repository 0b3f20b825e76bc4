"""Dataset file schema, loading/validation, and CSV emission.

A dataset JSON holds frames of instance annotations only, never pixels:

    {"frames": [{"id": 0, "height": 96, "width": 128, "instances": [
        {"id": 0,
         "gt": {"rle": {"size": [96, 128], "counts": [...]}},
         "approx": {"rle": {...}},
         "predicted": [{"rle": {...}}, ...],
         "bbox": [x_min, y_min, x_max, y_max],
         "news": {"north": [r, c], "east": [r, c],
                  "west": [r, c], "south": [r, c]}}]}]}

``gt`` may instead be ``{"polygons": [[x1, y1, x2, y2, ...], ...]}``, which
is rasterized on load. ``bbox``/``news`` are derived from the ground-truth
mask when absent and must be consistent with it when present.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, TYPE_CHECKING, Any, Iterator, Sequence

from .costs import CostModel
from .errors import SchemaError, ValidationError
from .masks import (
    BoundingBox,
    NewsKeypoints,
    PolygonSet,
    RleMask,
    extract_news,
    mask_bbox,
    rasterize_polygons,
)

if TYPE_CHECKING:  # only for annotations; simulate/strategies import this module
    from .simulate import CurvePoint
    from .strategies import Schedule


@dataclass(frozen=True)
class InstanceRecord:
    """One annotated object instance of a frame.

    ``polygons`` keeps the original polygon ground truth, when the file used
    one, so that re-serialization round-trips; ``gt_mask`` is always the
    rasterized form.
    """

    id: int
    gt_mask: RleMask
    bbox: BoundingBox
    news: NewsKeypoints
    approx_mask: RleMask | None = None
    predicted_masks: tuple[RleMask, ...] | None = None
    polygons: PolygonSet | None = None


def make_instance(
    instance_id: int,
    gt_mask: RleMask,
    approx_mask: RleMask | None = None,
    predicted_masks: Sequence[RleMask] | None = None,
    polygons: PolygonSet | None = None,
) -> InstanceRecord:
    """Build a record with bbox and NEWS keypoints derived from the mask."""
    return InstanceRecord(
        id=instance_id,
        gt_mask=gt_mask,
        bbox=mask_bbox(gt_mask),
        news=extract_news(gt_mask),
        approx_mask=approx_mask,
        predicted_masks=tuple(predicted_masks) if predicted_masks is not None else None,
        polygons=polygons,
    )


@dataclass(frozen=True)
class Frame:
    id: int
    height: int
    width: int
    instances: tuple[InstanceRecord, ...]

    def predicted_pool(self) -> list[RleMask]:
        """All model-predicted masks of the frame, pooled across instances."""
        return [m for inst in self.instances for m in (inst.predicted_masks or ())]


@dataclass(frozen=True)
class Dataset:
    frames: tuple[Frame, ...] = field(default_factory=tuple)

    @property
    def n_instances(self) -> int:
        return sum(len(f.instances) for f in self.frames)

    def iter_instances(self) -> Iterator[tuple[Frame, InstanceRecord]]:
        for frame in self.frames:
            for inst in frame.instances:
                yield frame, inst


def validate_dataset(dataset: Dataset) -> None:
    """Check all structural invariants, naming frame/instance/field on failure."""
    seen_frames: set[int] = set()
    for frame in dataset.frames:
        where = f"frame {frame.id}"
        if frame.height <= 0 or frame.width <= 0:
            raise SchemaError(f"{where}: non-positive dims {frame.height}x{frame.width}")
        if frame.id in seen_frames:
            raise SchemaError(f"{where}: duplicate frame id")
        seen_frames.add(frame.id)
        seen_insts: set[int] = set()
        for inst in frame.instances:
            _validate_instance(frame, inst)
            if inst.id in seen_insts:
                raise SchemaError(f"{where} / instance {inst.id}: duplicate instance id")
            seen_insts.add(inst.id)


def _validate_instance(frame: Frame, inst: InstanceRecord) -> None:
    where = f"frame {frame.id} / instance {inst.id}"
    masks: list[tuple[str, RleMask]] = [("gt", inst.gt_mask)]
    if inst.approx_mask is not None:
        masks.append(("approx", inst.approx_mask))
    for k, m in enumerate(inst.predicted_masks or ()):
        masks.append((f"predicted[{k}]", m))
    for name, m in masks:
        if m.height != frame.height or m.width != frame.width:
            raise SchemaError(
                f"{where}: {name} mask is {m.height}x{m.width}, "
                f"frame is {frame.height}x{frame.width}"
            )
    if inst.gt_mask.area == 0:
        raise SchemaError(f"{where}: gt mask is empty")
    if inst.approx_mask is not None and inst.approx_mask.area == 0:
        raise SchemaError(f"{where}: approx mask is empty")
    derived = mask_bbox(inst.gt_mask)
    if inst.bbox != derived:
        raise SchemaError(f"{where}: bbox {inst.bbox} does not match gt extents {derived}")
    if not inst.bbox.within(frame.height, frame.width):
        raise SchemaError(f"{where}: bbox {inst.bbox} outside the frame")
    gt = inst.gt_mask.to_array()
    for name in ("north", "east", "west", "south"):
        r, c = getattr(inst.news, name)
        if not (0 <= r < frame.height and 0 <= c < frame.width) or not gt[r, c]:
            raise SchemaError(f"{where}: news.{name} ({r}, {c}) not on the gt mask")
    if inst.news.bbox() != derived:
        raise SchemaError(f"{where}: news span {inst.news.bbox()} does not match gt extents")
    if inst.polygons is not None:
        for poly in inst.polygons.polygons:
            for x, y in poly:
                if not (0 <= x <= frame.width and 0 <= y <= frame.height):
                    raise SchemaError(f"{where}: polygon vertex ({x}, {y}) outside the frame")


# --- JSON (de)serialization -------------------------------------------------


def _mask_to_json(m: RleMask) -> dict[str, Any]:
    return {"rle": {"size": [m.height, m.width], "counts": list(m.runs)}}


def _mask_from_json(obj: Any, where: str, name: str) -> RleMask:
    if not isinstance(obj, dict) or "rle" not in obj:
        raise SchemaError(f"{where}: {name} must be an object with an 'rle' key")
    rle = obj["rle"]
    try:
        h, w = rle["size"]
        counts = rle["counts"]
        return RleMask(height=int(h), width=int(w), runs=tuple(int(c) for c in counts))
    except ValidationError as exc:
        raise SchemaError(f"{where}: {name}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {name}: malformed rle ({exc})") from exc


def _instance_from_json(obj: Any, frame_id: Any, height: int, width: int) -> InstanceRecord:
    if not isinstance(obj, dict) or "id" not in obj:
        raise SchemaError(f"frame {frame_id}: instance without an 'id'")
    inst_id = obj["id"]
    where = f"frame {frame_id} / instance {inst_id}"
    if not isinstance(inst_id, int):
        raise SchemaError(f"{where}: instance id must be an integer")
    if "gt" not in obj:
        raise SchemaError(f"{where}: missing 'gt'")
    gt_obj = obj["gt"]
    polygons = None
    if isinstance(gt_obj, dict) and "polygons" in gt_obj:
        try:
            polygons = PolygonSet.from_flat(gt_obj["polygons"])
        except ValidationError as exc:
            raise SchemaError(f"{where}: gt.polygons: {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{where}: gt.polygons malformed ({exc})") from exc
        gt_mask = rasterize_polygons(polygons, height, width)
        if gt_mask.area == 0:
            raise SchemaError(f"{where}: gt.polygons rasterize to an empty mask")
    else:
        gt_mask = _mask_from_json(gt_obj, where, "gt")
    approx = _mask_from_json(obj["approx"], where, "approx") if "approx" in obj else None
    predicted = None
    if "predicted" in obj:
        if not isinstance(obj["predicted"], list):
            raise SchemaError(f"{where}: 'predicted' must be a list")
        predicted = tuple(
            _mask_from_json(p, where, f"predicted[{k}]") for k, p in enumerate(obj["predicted"])
        )
    try:
        if "bbox" in obj:
            bbox = BoundingBox(*(int(v) for v in obj["bbox"]))
        else:
            bbox = mask_bbox(gt_mask)
        if "news" in obj:
            news = NewsKeypoints(**{k: tuple(v) for k, v in obj["news"].items()})
        else:
            news = extract_news(gt_mask)
    except ValidationError as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed bbox/news ({exc})") from exc
    return InstanceRecord(
        id=inst_id,
        gt_mask=gt_mask,
        bbox=bbox,
        news=news,
        approx_mask=approx,
        predicted_masks=predicted,
        polygons=polygons,
    )


def dataset_from_json(doc: Any) -> Dataset:
    if not isinstance(doc, dict) or "frames" not in doc or not isinstance(doc["frames"], list):
        raise SchemaError("top level must be an object with a 'frames' list")
    frames = []
    for fobj in doc["frames"]:
        if not isinstance(fobj, dict) or "id" not in fobj:
            raise SchemaError("frame without an 'id'")
        fid = fobj["id"]
        if not isinstance(fid, int):
            raise SchemaError(f"frame {fid}: frame id must be an integer")
        try:
            height = int(fobj["height"])
            width = int(fobj["width"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"frame {fid}: missing or malformed dims ({exc})") from exc
        insts = fobj.get("instances", [])
        if not isinstance(insts, list):
            raise SchemaError(f"frame {fid}: 'instances' must be a list")
        frames.append(
            Frame(
                id=fid,
                height=height,
                width=width,
                instances=tuple(_instance_from_json(i, fid, height, width) for i in insts),
            )
        )
    dataset = Dataset(frames=tuple(frames))
    validate_dataset(dataset)
    return dataset


def dataset_to_json(dataset: Dataset) -> dict[str, Any]:
    frames = []
    for frame in dataset.frames:
        insts = []
        for inst in frame.instances:
            obj: dict[str, Any] = {"id": inst.id}
            if inst.polygons is not None:
                obj["gt"] = {"polygons": inst.polygons.to_flat()}
            else:
                obj["gt"] = _mask_to_json(inst.gt_mask)
            if inst.approx_mask is not None:
                obj["approx"] = _mask_to_json(inst.approx_mask)
            if inst.predicted_masks is not None:
                obj["predicted"] = [_mask_to_json(m) for m in inst.predicted_masks]
            obj["bbox"] = [inst.bbox.x_min, inst.bbox.y_min, inst.bbox.x_max, inst.bbox.y_max]
            obj["news"] = {
                name: list(getattr(inst.news, name))
                for name in ("north", "east", "west", "south")
            }
            insts.append(obj)
        frames.append(
            {"id": frame.id, "height": frame.height, "width": frame.width, "instances": insts}
        )
    return {"frames": frames}


def load_dataset(path: str | Path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return dataset_from_json(doc)


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write canonical JSON; identical datasets produce identical bytes."""
    text = json.dumps(dataset_to_json(dataset), sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


# --- CSV emission -----------------------------------------------------------

CURVE_COLUMNS = (
    "strategy",
    "alpha",
    "seed",
    "budget_s",
    "budget_h",
    "n_instances_labeled",
    "n_frames_labeled",
    "mean_label_iou",
    "frac_correct",
    "label_pq",
    "label_sq",
    "label_rq",
    "trainer_quality",
)


def fmt_float(x: float | None) -> str:
    """6 significant digits, '.' decimal separator, '' for absent values."""
    if x is None:
        return ""
    return "%.6g" % float(x)


def write_curves_csv(points: Sequence["CurvePoint"], path: str | Path | IO[str]) -> None:
    """One row per curve point, canonically ordered by strategy then budget."""
    if not points:
        raise ValidationError("no curve points to write")
    ordered = sorted(
        points,
        key=lambda p: (p.strategy, p.alpha if p.alpha is not None else -1.0, p.seed, p.budget_s),
    )
    rows = [
        [
            p.strategy,
            fmt_float(p.alpha),
            str(p.seed),
            fmt_float(p.budget_s),
            fmt_float(p.budget_h),
            str(p.n_instances_labeled),
            str(p.n_frames_labeled),
            fmt_float(p.mean_label_iou),
            fmt_float(p.frac_correct),
            fmt_float(p.label_pq),
            fmt_float(p.label_sq),
            fmt_float(p.label_rq),
            fmt_float(p.trainer_quality),
        ]
        for p in ordered
    ]
    _write_csv(path, CURVE_COLUMNS, rows)


SCHEDULE_COLUMNS = (
    "rank",
    "frame_id",
    "instance_id",
    "action",
    "score_used",
    "cost_s",
    "cumulative_s",
)


def write_schedule_csv(schedule: "Schedule", path: str | Path | IO[str]) -> None:
    rows = [
        [
            str(rank),
            str(entry.action.frame_id),
            str(entry.action.instance_id),
            entry.action.kind.value,
            fmt_float(entry.score),
            fmt_float(entry.cost_s),
            fmt_float(entry.cumulative_s),
        ]
        for rank, entry in enumerate(schedule.entries, start=1)
    ]
    _write_csv(path, SCHEDULE_COLUMNS, rows)


HISTOGRAM_COLUMNS = ("bin_low", "bin_high", "count", "correct", "fraction")


def write_histogram_csv(hist: Any, path: str | Path | IO[str]) -> None:
    rows = [
        [
            fmt_float(hist.bin_edges[i]),
            fmt_float(hist.bin_edges[i + 1]),
            str(hist.counts[i]),
            str(hist.correct[i]),
            fmt_float(hist.fractions[i]),
        ]
        for i in range(len(hist.counts))
    ]
    _write_csv(path, HISTOGRAM_COLUMNS, rows)


def _write_csv(path: str | Path | IO[str], header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    if hasattr(path, "write"):
        _emit_csv(path, header, rows)  # type: ignore[arg-type]
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            _emit_csv(fh, header, rows)


def _emit_csv(fh: IO[str], header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


# --- CLI helpers ------------------------------------------------------------


def parse_budget_spec(spec: str) -> list[float]:
    """Parse a budget grid: 'start:stop:step' (stop inclusive) or 'a,b,c'."""
    spec = spec.strip()
    try:
        if ":" in spec:
            parts = [float(p) for p in spec.split(":")]
            if len(parts) != 3:
                raise ValueError("expected start:stop:step")
            start, stop, step = parts
            if step <= 0:
                raise ValueError("step must be positive")
            budgets = []
            k = 0
            while True:
                b = start + k * step
                if b > stop + 1e-9:
                    break
                budgets.append(b)
                k += 1
        else:
            budgets = [float(p) for p in spec.split(",") if p.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad budget spec {spec!r}: {exc}") from exc
    if not budgets:
        raise ValidationError(f"budget spec {spec!r} yields no budgets")
    if any(b < 0 for b in budgets):
        raise ValidationError("budgets must be non-negative")
    if any(b2 < b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValidationError("budgets must be sorted ascending")
    return budgets


_COST_KEYS = (
    "keypoints_s",
    "correct_isolated_s",
    "correct_overlapping_s",
    "polygon_s",
    "isolated_max_overlap",
)


def load_cost_config(path: str | Path) -> dict[str, float]:
    """Read `cost.*` overrides from a TOML or JSON config file."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        import tomli

        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    else:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    section = doc.get("cost", {})
    if not isinstance(section, dict):
        raise ValidationError(f"{path}: 'cost' must be a table/object")
    unknown = set(section) - set(_COST_KEYS)
    if unknown:
        raise ValidationError(f"{path}: unknown cost keys {sorted(unknown)}")
    return {k: float(v) for k, v in section.items()}


def cost_model_from_sources(
    config: dict[str, float] | None = None, overrides: dict[str, float] | None = None
) -> CostModel:
    """Defaults, overlaid with config-file values, overlaid with CLI flags."""
    values: dict[str, float] = {}
    values.update(config or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return CostModel(**values)
