"""Pseudo-label propagation across video frames.

A tracker only needs per-object box queries on the first frame; from there it
localizes every instance in the remaining frames while the class labels stay
frozen at their query values. The heavy-duty tracker lives outside this
package and talks through the track-stream file format; a deterministic
greedy-IoU tracker is included as a desk-scale stand-in and test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator

from .boxes import BoundingBox, Detection, ImageDims, detection_sort_key, iou
from .datasets import (
    Annotation,
    CategoryTable,
    DatasetStore,
    ImageMeta,
    ImageRecord,
    IntegrityError,
)
from .streams import QUERY_ORIGINS, TrackRecord
from .validation import check_unit_interval

DEFAULT_QUERY_SCORE_CUTOFF = 0.7


@dataclass(frozen=True)
class FirstFrameQuery:
    """Box+class seed for one object instance at frame 0 of a video."""

    video_id: str
    instance_id: int
    box: BoundingBox
    label: int
    score: float
    origin: str = "manual"

    def __post_init__(self) -> None:
        if self.origin not in QUERY_ORIGINS:
            raise ValueError(f"query origin must be one of {QUERY_ORIGINS}, got {self.origin!r}")
        if not 0.0 <= float(self.score) <= 1.0:
            raise ValueError(f"query score must lie in [0, 1], got {self.score!r}")
        object.__setattr__(self, "score", float(self.score))


def select_queries(
    video_id: str,
    first_frame_dets: Sequence[Detection],
    origin: str,
    *,
    score_cutoff: float = DEFAULT_QUERY_SCORE_CUTOFF,
) -> list[FirstFrameQuery]:
    """Turn labeled first-frame detections into tracker queries.

    Predicted detections below ``score_cutoff`` are dropped to suppress false
    positives (a score exactly at the cutoff is kept); manual boxes are
    always trusted. Instance ids are assigned sequentially in the package's
    deterministic detection order, so the result does not depend on input
    ordering.
    """
    if origin not in QUERY_ORIGINS:
        raise ValueError(f"origin must be one of {QUERY_ORIGINS}, got {origin!r}")
    check_unit_interval(score_cutoff, "score_cutoff", low_open=True, high_open=True)
    selected = []
    for det in sorted(first_frame_dets, key=detection_sort_key):
        if det.label is None or not isinstance(det.label, int):
            raise IntegrityError(
                f"first-frame detection {det.box.as_xywh()} in video {video_id!r} has no "
                f"class label; propagation requires labeled queries"
            )
        if origin == "predicted" and det.score < score_cutoff:
            continue
        selected.append(det)
    return [
        FirstFrameQuery(
            video_id=video_id,
            instance_id=i,
            box=det.box,
            label=det.label,
            score=det.score,
            origin=origin,
        )
        for i, det in enumerate(selected)
    ]


class GreedyIouTracker(BaseEstimator):
    """Deterministic greedy-IoU propagation over per-frame candidate boxes.

    Per frame, surviving tracks are matched to candidate boxes greedily by
    descending IoU against the track's previous box; matches below
    ``match_min_iou`` are rejected, each candidate is consumed at most once
    and unmatched tracks terminate for good. This is test scaffolding for
    desk-scale sequences, not a claim of parity with a learned tracker.
    """

    def __init__(self, match_min_iou: float = 0.3):
        self.match_min_iou = match_min_iou

    def fit(self, X=None, y=None):
        return self

    def predict(
        self,
        queries: Sequence[FirstFrameQuery],
        frames: Mapping[int, Sequence[BoundingBox]],
    ) -> list[TrackRecord]:
        min_iou = check_unit_interval(self.match_min_iou, "match_min_iou", low_open=True, high_open=True)
        if not queries:
            return []
        video_ids = {q.video_id for q in queries}
        if len(video_ids) != 1:
            raise ValueError(f"queries must target a single video, got {sorted(video_ids)}")

        active: dict[int, FirstFrameQuery] = {}
        previous: dict[int, BoundingBox] = {}
        for q in queries:
            if q.instance_id in active:
                raise IntegrityError(f"duplicate query instance_id {q.instance_id}")
            active[q.instance_id] = q
            previous[q.instance_id] = q.box

        records: list[TrackRecord] = []
        for frame_index in sorted(frames):
            if not active:
                break
            candidates = list(frames[frame_index])
            pairs = sorted(
                (
                    (iou(previous[inst], box), inst, ci)
                    for inst in active
                    for ci, box in enumerate(candidates)
                ),
                key=lambda t: (-t[0], t[1], t[2]),
            )
            used_candidates: set[int] = set()
            matched: dict[int, int] = {}
            for value, inst, ci in pairs:
                if value < min_iou:
                    break
                if inst in matched or ci in used_candidates:
                    continue
                matched[inst] = ci
                used_candidates.add(ci)
            for inst in sorted(active):
                if inst not in matched:
                    continue
                box = candidates[matched[inst]]
                query = active[inst]
                records.append(
                    TrackRecord(
                        video_id=query.video_id,
                        frame_index=frame_index,
                        instance_id=inst,
                        box=box,
                        label=query.label,
                        score=query.score,
                    )
                )
                previous[inst] = box
            active = {inst: q for inst, q in active.items() if inst in matched}
        return sorted(records, key=lambda r: (r.frame_index, r.instance_id))


def frame_image_id(video_id: str, frame_index: int) -> str:
    return f"{video_id}/frame_{frame_index:06d}"


def ingest_track_stream(
    records: Iterable[TrackRecord],
    queries: Sequence[FirstFrameQuery],
    *,
    categories: CategoryTable,
    frame_dims: ImageDims | None = None,
    images: Sequence[ImageRecord] | None = None,
    split_tag: str | None = None,
) -> DatasetStore:
    """Turn a track stream into a pseudo-annotated dataset.

    Every record must belong to a known (video, instance) query; its class is
    the query's label regardless of what the stream carries (labels are
    frozen at query time). Frame images are taken from ``images`` when given,
    otherwise synthesized at ``frame_dims``. Boxes are clipped to their
    frame.
    """
    by_key = {(q.video_id, q.instance_id): q for q in queries}
    if len(by_key) != len(queries):
        raise IntegrityError("duplicate (video_id, instance_id) among queries")
    for q in queries:
        categories.by_id(q.label)

    image_index: dict[str, ImageRecord] = {}
    if images is not None:
        for img in images:
            image_index[img.id] = img
    elif frame_dims is None:
        raise ValueError("ingest needs either an images manifest or frame_dims")

    seen: set[tuple[str, int, int]] = set()
    annotations: list[Annotation] = []
    synthesized: dict[str, ImageRecord] = {}
    next_id = 1
    ordered = sorted(records, key=lambda r: (r.video_id, r.frame_index, r.instance_id))
    for rec in ordered:
        key = (rec.video_id, rec.frame_index, rec.instance_id)
        if key in seen:
            raise IntegrityError(f"duplicate track record for {key}")
        seen.add(key)
        query = by_key.get((rec.video_id, rec.instance_id))
        if query is None:
            raise IntegrityError(
                f"track record for video {rec.video_id!r} frame {rec.frame_index} names "
                f"instance {rec.instance_id}, which matches no query"
            )
        image_id = frame_image_id(rec.video_id, rec.frame_index)
        image = image_index.get(image_id)
        if image is None:
            if images is not None:
                raise IntegrityError(f"track stream references image {image_id!r} missing from the manifest")
            image = synthesized.get(image_id)
            if image is None:
                image = ImageRecord(
                    id=image_id,
                    file_name=f"{image_id}.jpg",
                    dims=frame_dims,
                    meta=ImageMeta(video_id=rec.video_id, frame_index=rec.frame_index),
                )
                synthesized[image_id] = image
        annotations.append(
            Annotation(
                id=next_id,
                image_id=image_id,
                category_id=query.label,
                box=rec.box.clip(image.dims),
                score=rec.score,
                provenance="pseudo",
            )
        )
        next_id += 1

    if images is not None:
        final_images = tuple(images)
    else:
        final_images = tuple(synthesized[k] for k in sorted(synthesized))
    return DatasetStore(
        images=final_images,
        categories=categories,
        annotations=tuple(annotations),
        split_tag=split_tag,
    )


def annotation_cost_reduction(n_manually_annotated_frames: int, n_total_frames: int) -> float:
    """Fraction of per-frame annotation work saved by propagation."""
    if n_total_frames <= 0:
        raise ValueError(f"n_total_frames must be positive, got {n_total_frames!r}")
    if not 0 <= n_manually_annotated_frames <= n_total_frames:
        raise ValueError(
            f"n_manually_annotated_frames must lie in [0, {n_total_frames}], "
            f"got {n_manually_annotated_frames!r}"
        )
    return 1.0 - n_manually_annotated_frames / n_total_frames
