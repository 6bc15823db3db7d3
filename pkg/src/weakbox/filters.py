"""Post-processing filters for over-predicted class-agnostic localizations.

Raw open-vocabulary localizers tend to over-predict: they emit near
image-sized background boxes, stacks of near-identical duplicates, single
boxes spanning whole groups of objects, and fragments nested inside real
objects. Four sequential stages clean this up:

1. background: drop boxes covering at least ``background_area_fraction`` of
   the image (inclusive bound, "at least").
2. duplicate: walk boxes in descending score and drop any whose IoU with an
   already kept box strictly exceeds ``duplicate_iou``.
3. crowd: drop boxes that contain ``crowd_min_contained`` or more other
   boxes, where "contains" means the other box's capture rate (intersection
   over its own area) strictly exceeds ``containment_capture``.
4. nested: drop boxes contained within another surviving box, same strict
   capture-rate bound.

Crowd and nested removals are counted against the stage's input set and then
applied simultaneously, so results do not depend on scan order. Nested runs
after crowd so that legitimate multi-object containers are already gone and
do not swallow the objects they contained.

Each stage is a stateless sklearn-style estimator: construction stores the
thresholds verbatim, ``fit`` is a no-op, and ``get_params`` round-trips the
configuration (used by the CLI to echo effective settings into outputs).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator

from .boxes import (
    Detection,
    ImageDims,
    capture_rate,
    detection_sort_key,
    image_area_fraction,
    iou,
)
from .validation import check_detections, check_int_at_least, check_unit_interval

STAGES = ("background", "duplicate", "crowd", "nested")


@dataclass(frozen=True)
class Removal:
    detection: Detection
    stage: str


@dataclass(frozen=True)
class FilterTrace:
    """Survivors plus every removal tagged with the stage that caused it."""

    kept: tuple[Detection, ...]
    removed: tuple[Removal, ...]

    def removed_at(self, stage: str) -> tuple[Detection, ...]:
        return tuple(r.detection for r in self.removed if r.stage == stage)

    def __len__(self) -> int:
        return len(self.kept) + len(self.removed)


def _trace(kept: Iterable[Detection], removed: Iterable[Detection], stage: str) -> FilterTrace:
    return FilterTrace(tuple(kept), tuple(Removal(det, stage) for det in removed))


class _StatelessFilter(BaseEstimator):
    """Shared no-op fit so stages compose with sklearn pipelines."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, detections: Sequence[Detection], dims: ImageDims | None = None) -> list[Detection]:
        return list(self.apply(detections, dims).kept)


class BackgroundFilter(_StatelessFilter):
    """Drops boxes covering at least ``area_fraction`` of the image."""

    def __init__(self, area_fraction: float = 0.90):
        self.area_fraction = area_fraction

    def apply(self, detections: Sequence[Detection], dims: ImageDims | None = None) -> FilterTrace:
        threshold = check_unit_interval(self.area_fraction, "area_fraction", low_open=True)
        if dims is None:
            raise ValueError("BackgroundFilter needs image dims")
        dets = check_detections(detections)
        kept, removed = [], []
        for det in dets:
            (removed if image_area_fraction(det.box, dims) >= threshold else kept).append(det)
        return _trace(kept, removed, "background")


class DuplicateFilter(_StatelessFilter):
    """Drops lower-confidence boxes overlapping a kept box at IoU > ``iou_threshold``."""

    def __init__(self, iou_threshold: float = 0.75):
        self.iou_threshold = iou_threshold

    def apply(self, detections: Sequence[Detection], dims: ImageDims | None = None) -> FilterTrace:
        threshold = check_unit_interval(self.iou_threshold, "iou_threshold", low_open=True)
        dets = sorted(check_detections(detections), key=detection_sort_key)
        kept: list[Detection] = []
        removed = []
        for det in dets:
            if any(iou(det.box, survivor.box) > threshold for survivor in kept):
                removed.append(det)
            else:
                kept.append(det)
        return _trace(kept, removed, "duplicate")


class CrowdFilter(_StatelessFilter):
    """Drops boxes containing ``min_contained`` or more other boxes."""

    def __init__(self, containment_capture: float = 0.95, min_contained: int = 3):
        self.containment_capture = containment_capture
        self.min_contained = min_contained

    def apply(self, detections: Sequence[Detection], dims: ImageDims | None = None) -> FilterTrace:
        capture = check_unit_interval(self.containment_capture, "containment_capture", low_open=True)
        minimum = check_int_at_least(self.min_contained, "min_contained", 2)
        dets = check_detections(detections)
        kept, removed = [], []
        for i, det in enumerate(dets):
            contained = sum(
                1
                for j, other in enumerate(dets)
                if j != i and capture_rate(other.box, det.box) > capture
            )
            (removed if contained >= minimum else kept).append(det)
        return _trace(kept, removed, "crowd")


class NestedFilter(_StatelessFilter):
    """Drops boxes contained within another box of the same set."""

    def __init__(self, containment_capture: float = 0.95):
        self.containment_capture = containment_capture

    def apply(self, detections: Sequence[Detection], dims: ImageDims | None = None) -> FilterTrace:
        capture = check_unit_interval(self.containment_capture, "containment_capture", low_open=True)
        dets = check_detections(detections)
        kept, removed = [], []
        for i, det in enumerate(dets):
            nested = any(
                capture_rate(det.box, other.box) > capture
                for j, other in enumerate(dets)
                if j != i
            )
            (removed if nested else kept).append(det)
        return _trace(kept, removed, "nested")


class FilterPipeline(_StatelessFilter):
    """The four stages in order: background, duplicate, crowd, nested.

    Each stage sees only the previous stage's survivors; the returned trace
    records the stage responsible for every removal. The pipeline is a
    contraction and idempotent: re-filtering its own output changes nothing.
    """

    def __init__(
        self,
        background_area_fraction: float = 0.90,
        duplicate_iou: float = 0.75,
        containment_capture: float = 0.95,
        crowd_min_contained: int = 3,
    ):
        self.background_area_fraction = background_area_fraction
        self.duplicate_iou = duplicate_iou
        self.containment_capture = containment_capture
        self.crowd_min_contained = crowd_min_contained

    def stages(self) -> tuple[_StatelessFilter, ...]:
        return (
            BackgroundFilter(self.background_area_fraction),
            DuplicateFilter(self.duplicate_iou),
            CrowdFilter(self.containment_capture, self.crowd_min_contained),
            NestedFilter(self.containment_capture),
        )

    def apply(self, detections: Sequence[Detection], dims: ImageDims | None = None) -> FilterTrace:
        current = check_detections(detections)
        removals: list[Removal] = []
        for stage in self.stages():
            trace = stage.apply(current, dims)
            removals.extend(trace.removed)
            current = list(trace.kept)
        return FilterTrace(tuple(current), tuple(removals))
