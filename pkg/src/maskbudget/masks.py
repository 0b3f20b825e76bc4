"""Binary instance masks (run-length encoded), boxes, extreme points, IoU.

Masks live on an ``height x width`` pixel grid and are stored run-length
encoded in row-major scan order, first run counting zeros (COCO-style
uncompressed layout). Pixel coordinates are ``(row, col)``; boxes are
``(x_min, y_min, x_max, y_max)`` with inclusive integer corners.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, EmptyMaskError, InvalidPolygonError, ValidationError

Pixel = tuple[int, int]  # (row, col)


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask.

    ``runs`` alternate counts of unset/set pixels starting with unset; the
    first run may be 0, every later run is >= 1, and the counts sum to
    ``height * width``.
    """

    height: int
    width: int
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise DimensionError(f"mask dims must be positive, got {self.height}x{self.width}")
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if not self.runs:
            raise ValidationError("runs may not be empty for a non-empty grid")
        if self.runs[0] < 0 or any(r < 1 for r in self.runs[1:]):
            raise ValidationError(f"non-canonical runs {self.runs}: only the first run may be 0")
        total = sum(self.runs)
        if total != self.height * self.width:
            raise ValidationError(
                f"runs sum to {total}, expected {self.height * self.width} "
                f"for a {self.height}x{self.width} grid"
            )

    @property
    def area(self) -> int:
        """Number of set pixels."""
        return sum(self.runs[1::2])

    @cached_property
    def _one_spans(self) -> tuple[np.ndarray, np.ndarray]:
        # Half-open [start, end) index spans of set pixels in the flat scan.
        ends = np.cumsum(self.runs)
        starts = ends - np.asarray(self.runs)
        return starts[1::2], ends[1::2]

    def to_array(self) -> np.ndarray:
        """Decode to a row-major boolean grid."""
        flat = np.repeat(np.arange(len(self.runs)) % 2, self.runs).astype(bool)
        return flat.reshape(self.height, self.width)

    def same_dims(self, other: RleMask) -> bool:
        return self.height == other.height and self.width == other.width


def rle_encode(bitmap: np.ndarray | Sequence[Sequence[bool]]) -> RleMask:
    """Encode a row-major boolean grid into canonical RLE form."""
    grid = np.asarray(bitmap, dtype=bool)
    if grid.ndim != 2 or grid.size == 0:
        raise DimensionError(f"expected a non-empty 2-D grid, got shape {grid.shape}")
    flat = np.concatenate(([-1], grid.ravel().astype(np.int8), [-1]))
    borders = np.flatnonzero(np.diff(flat))
    runs = np.diff(borders).tolist()
    if grid.flat[0]:
        runs = [0] + runs
    return RleMask(height=grid.shape[0], width=grid.shape[1], runs=tuple(runs))


def rle_decode(mask: RleMask) -> np.ndarray:
    """Decode an :class:`RleMask` back to a boolean grid."""
    return mask.to_array()


def intersection_area(a: RleMask, b: RleMask) -> int:
    """Number of pixels set in both masks, computed on the run spans."""
    if not a.same_dims(b):
        raise DimensionError(
            f"mask dims differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    sa, ea = a._one_spans
    sb, eb = b._one_spans
    total = 0
    i = j = 0
    while i < len(sa) and j < len(sb):
        lo = max(sa[i], sb[j])
        hi = min(ea[i], eb[j])
        if hi > lo:
            total += int(hi - lo)
        if ea[i] <= eb[j]:
            i += 1
        else:
            j += 1
    return total


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection-over-union of two masks on the same grid.

    Two empty masks agree vacuously and score 1.0; empty vs non-empty is 0.0.
    """
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 1.0
    return inter / union


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with inclusive integer pixel corners."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValidationError(f"degenerate box {self}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValidationError(f"box {self} has negative coordinates")

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)

    def within(self, height: int, width: int) -> bool:
        return self.x_max < width and self.y_max < height


def bbox_iou(a: BoundingBox, b: BoundingBox) -> float:
    """IoU of two boxes under inclusive-pixel areas; 0.0 when disjoint."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def mask_bbox(m: RleMask) -> BoundingBox:
    """Tightest box containing all set pixels of ``m``."""
    grid = m.to_array()
    rows = np.flatnonzero(grid.any(axis=1))
    if rows.size == 0:
        raise EmptyMaskError("cannot take the bounding box of an empty mask")
    cols = np.flatnonzero(grid.any(axis=0))
    return BoundingBox(
        x_min=int(cols[0]), y_min=int(rows[0]), x_max=int(cols[-1]), y_max=int(rows[-1])
    )


@dataclass(frozen=True)
class NewsKeypoints:
    """North/East/West/South extreme pixels of a mask, as (row, col)."""

    north: Pixel
    east: Pixel
    west: Pixel
    south: Pixel

    def __post_init__(self) -> None:
        for name in ("north", "east", "west", "south"):
            r, c = getattr(self, name)
            object.__setattr__(self, name, (int(r), int(c)))
        if self.north[0] > self.south[0]:
            raise ValidationError(f"north row {self.north[0]} below south row {self.south[0]}")
        if self.west[1] > self.east[1]:
            raise ValidationError(f"west col {self.west[1]} right of east col {self.east[1]}")

    def bbox(self) -> BoundingBox:
        """Box spanned by the four keypoints; equals the mask's bounding box."""
        return BoundingBox(
            x_min=self.west[1], y_min=self.north[0], x_max=self.east[1], y_max=self.south[0]
        )


def extract_news(m: RleMask) -> NewsKeypoints:
    """Extreme pixels of a non-empty mask.

    Ties on the extremal row (north/south) are broken by minimal column and
    ties on the extremal column (east/west) by minimal row, which is exactly
    the first hit of a row-major scan.
    """
    rows, cols = np.nonzero(m.to_array())
    if rows.size == 0:
        raise EmptyMaskError("cannot extract keypoints from an empty mask")
    # np.nonzero yields row-major order, so each argmin/argmax below lands on
    # the first (minimal secondary coordinate) occurrence.
    north = (int(rows[0]), int(cols[0]))
    south_start = int(np.searchsorted(rows, rows[-1], side="left"))
    south = (int(rows[-1]), int(cols[south_start]))
    w = int(np.argmin(cols))
    e = int(np.argmax(cols))
    return NewsKeypoints(
        north=north,
        east=(int(rows[e]), int(cols[e])),
        west=(int(rows[w]), int(cols[w])),
        south=south,
    )


@dataclass(frozen=True)
class PolygonSet:
    """One or more polygons delineating a single instance.

    Each polygon is a tuple of (x, y) vertices, at least three of them;
    multiple polygons let one instance span occlusion gaps.
    """

    polygons: tuple[tuple[tuple[float, float], ...], ...]

    def __post_init__(self) -> None:
        polys = tuple(
            tuple((float(x), float(y)) for x, y in poly) for poly in self.polygons
        )
        object.__setattr__(self, "polygons", polys)
        for k, poly in enumerate(polys):
            if len(poly) < 3:
                raise InvalidPolygonError(
                    f"polygon {k} has {len(poly)} vertices, need at least 3"
                )

    @classmethod
    def from_flat(cls, flat_lists: Iterable[Sequence[float]]) -> PolygonSet:
        """Build from [x1, y1, x2, y2, ...] coordinate lists (dataset format)."""
        polys = []
        for flat in flat_lists:
            if len(flat) % 2 != 0:
                raise InvalidPolygonError(f"odd coordinate count {len(flat)}")
            polys.append(tuple(zip(flat[0::2], flat[1::2])))
        return cls(polygons=tuple(polys))

    def to_flat(self) -> list[list[float]]:
        return [[v for xy in poly for v in xy] for poly in self.polygons]


def _polygon_hits(poly: tuple[tuple[float, float], ...], height: int, width: int) -> np.ndarray:
    """Even-odd containment of pixel centers, evaluated on the polygon's bbox."""
    xs = np.array([v[0] for v in poly])
    ys = np.array([v[1] for v in poly])
    col_lo = max(0, int(np.floor(xs.min() - 0.5)))
    col_hi = min(width - 1, int(np.ceil(xs.max())))
    row_lo = max(0, int(np.floor(ys.min() - 0.5)))
    row_hi = min(height - 1, int(np.ceil(ys.max())))
    hit = np.zeros((height, width), dtype=bool)
    if col_lo > col_hi or row_lo > row_hi:
        return hit
    px = np.arange(col_lo, col_hi + 1) + 0.5
    py = np.arange(row_lo, row_hi + 1) + 0.5
    pxg, pyg = np.meshgrid(px, py)
    inside = np.zeros_like(pxg, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > pyg) != (y2 > pyg)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_int = x1 + (pyg - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (pxg < x_int)
    hit[row_lo : row_hi + 1, col_lo : col_hi + 1] = inside
    return hit


def rasterize_polygons(polys: PolygonSet, height: int, width: int) -> RleMask:
    """Union of the polygons as a mask: a pixel is set iff its center lies
    inside any polygon under the even-odd rule."""
    if height <= 0 or width <= 0:
        raise DimensionError(f"dims must be positive, got {height}x{width}")
    grid = np.zeros((height, width), dtype=bool)
    for poly in polys.polygons:
        grid |= _polygon_hits(poly, height, width)
    return rle_encode(grid)
