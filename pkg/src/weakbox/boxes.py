"""Axis-aligned box geometry: overlap measures and non-maximum suppression.

Boxes are closed rectangles in continuous pixel coordinates with a top-left
origin, so two boxes that merely touch along an edge have intersection area
zero. Degenerate boxes (non-positive width or height) are rejected at
construction time rather than silently dropped by downstream consumers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


class BoxError(ValueError):
    """Malformed or out-of-bounds box geometry."""


# Absolute slack for "inside the image" checks; absorbs float dust from
# clipping arithmetic without admitting genuinely out-of-bounds boxes.
_EDGE_TOL = 1e-9


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Rectangle given by its left edge, top edge, width, and height.

    Ordering is lexicographic on (x, y, w, h); it is the tie-break used
    whenever detections with equal scores must be ranked deterministically.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise BoxError(f"box field {name!r} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise BoxError(f"box field {name!r} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.w <= 0 or self.h <= 0:
            raise BoxError(
                f"box must have positive extent, got w={self.w!r} h={self.h!r}"
            )

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def as_xywh(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def clip(self, dims: "ImageDims") -> "BoundingBox":
        """Clip to the image frame; raises BoxError if nothing remains."""
        x1 = max(self.x, 0.0)
        y1 = max(self.y, 0.0)
        x2 = min(self.x2, float(dims.width))
        y2 = min(self.y2, float(dims.height))
        if x2 - x1 <= 0 or y2 - y1 <= 0:
            raise BoxError(f"box {self.as_xywh()} lies outside a {dims.width}x{dims.height} image")
        return BoundingBox(x1, y1, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class ImageDims:
    """Integer pixel dimensions of an image."""

    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("width", "height"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise BoxError(f"image {name} must be an integer, got {value!r}")
            if value < 1:
                raise BoxError(f"image {name} must be >= 1, got {value}")

    @property
    def area(self) -> float:
        return float(self.width * self.height)


@dataclass(frozen=True)
class Detection:
    """A scored box, optionally carrying a class label and a provenance tag."""

    box: BoundingBox
    score: float
    label: int | str | None = None
    source: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.box, BoundingBox):
            raise BoxError(f"detection box must be a BoundingBox, got {self.box!r}")
        if not isinstance(self.score, (int, float)) or isinstance(self.score, bool):
            raise BoxError(f"detection score must be a number, got {self.score!r}")
        if not 0.0 <= float(self.score) <= 1.0:
            raise BoxError(f"detection score must lie in [0, 1], got {self.score!r}")
        object.__setattr__(self, "score", float(self.score))


def area(box: BoundingBox) -> float:
    """Area of a box in square pixels."""
    return box.w * box.h


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    if iw <= 0:
        return 0.0
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if ih <= 0:
        return 0.0
    return iw * ih


def _edge_area(box: BoundingBox) -> float:
    # Same right-edge arithmetic as intersection_area, so identical boxes
    # yield intersection == area bit-exactly and ratios never exceed 1.
    return (box.x2 - box.x) * (box.y2 - box.y)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes, symmetric in arguments."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return min(1.0, inter / (_edge_area(a) + _edge_area(b) - inter))


def capture_rate(inner: BoundingBox, outer: BoundingBox) -> float:
    """Intersection area divided by the *inner* box's own area.

    Measures how much of ``inner`` is captured by ``outer``; 1.0 means full
    containment. Unlike IoU this is not symmetric.
    """
    return min(1.0, intersection_area(inner, outer) / _edge_area(inner))


def image_area_fraction(box: BoundingBox, dims: ImageDims) -> float:
    """Fraction of the image covered by the box; box must fit in the image."""
    if (
        box.x < -_EDGE_TOL
        or box.y < -_EDGE_TOL
        or box.x2 > dims.width + _EDGE_TOL
        or box.y2 > dims.height + _EDGE_TOL
    ):
        raise BoxError(
            f"box {box.as_xywh()} extends beyond a {dims.width}x{dims.height} image; clip it first"
        )
    return min(1.0, area(box) / dims.area)


def detection_sort_key(det: Detection) -> tuple:
    """Total order for detections: descending score, then box, label, source.

    Equal-score ties resolve to the lexicographically smaller (x, y, w, h)
    box, making every score-ordered algorithm in this package deterministic
    under input permutation.
    """
    label = det.label
    return (
        -det.score,
        det.box.x,
        det.box.y,
        det.box.w,
        det.box.h,
        label is not None,
        str(label) if label is not None else "",
        det.source or "",
    )


def nms(
    dets: Iterable[Detection],
    iou_threshold: float,
    class_agnostic: bool = True,
) -> list[Detection]:
    """Greedy non-maximum suppression in descending score order.

    A detection is suppressed when its IoU with an already kept detection
    strictly exceeds ``iou_threshold``. With ``class_agnostic`` set the
    comparison ignores labels; otherwise only same-label pairs compete.
    Survivors come back in descending score order.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold!r}")
    kept: list[Detection] = []
    for det in sorted(dets, key=detection_sort_key):
        suppressed = False
        for survivor in kept:
            if not class_agnostic and survivor.label != det.label:
                continue
            if iou(det.box, survivor.box) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(det)
    return kept


def clip_detections(dets: Sequence[Detection], dims: ImageDims) -> list[Detection]:
    """Clip every detection box to the image frame, preserving order."""
    out = []
    for det in dets:
        clipped = det.box.clip(dims)
        if clipped is det.box or clipped == det.box:
            out.append(det)
        else:
            out.append(Detection(clipped, det.score, det.label, det.source))
    return out
