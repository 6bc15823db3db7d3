"""Weak labeling: filtered class-agnostic boxes + image-level class labels.

For images known to contain a single product class, localization can be
outsourced to a generic-query detector and classification to the image-level
label. The builder runs the filter pipeline per image, stamps every surviving
box with the image's class, and assembles a validated dataset.
"""

from __future__ import annotations

import warnings
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator

from .boxes import Detection, clip_detections, detection_sort_key
from .datasets import (
    Annotation,
    CategoryTable,
    DatasetStore,
    ImageRecord,
    IntegrityError,
)
from .filters import FilterPipeline, FilterTrace
from .streams import group_detections


def assign_image_label(
    trace: FilterTrace,
    category_id: int,
    *,
    image_id: str,
    id_start: int = 1,
    provenance: str = "weak",
) -> list[Annotation]:
    """Turn a filter trace's survivors into annotations of one class.

    Localizer confidences are carried through on the annotations; evaluation
    treats weak ground truth as scoreless regardless.
    """
    return [
        Annotation(
            id=id_start + i,
            image_id=image_id,
            category_id=category_id,
            box=det.box,
            score=det.score,
            provenance=provenance,
        )
        for i, det in enumerate(trace.kept)
    ]


class WeakLabeler(BaseEstimator):
    """Builds a fully labeled store from single-class images and raw localizations."""

    def __init__(self, pipeline: FilterPipeline | None = None):
        self.pipeline = pipeline

    def fit(self, X=None, y=None):
        return self

    def build(
        self,
        images: Sequence[ImageRecord],
        categories: CategoryTable,
        detections: Iterable[tuple[str, Detection]],
        *,
        split_tag: str | None = None,
    ) -> DatasetStore:
        """Filter per image, assign the image-level label, merge into a store.

        Every image must carry an image-level label; detections must
        reference known images. Images whose localizations are entirely
        filtered away stay in the dataset with a warning. The result is
        independent of the detection stream's ordering.
        """
        pipeline = self.pipeline if self.pipeline is not None else FilterPipeline()
        by_image = {img.id: img for img in images}
        if len(by_image) != len(images):
            raise IntegrityError("image ids must be unique")
        for img in images:
            if img.meta is None or img.meta.image_level_label is None:
                raise IntegrityError(f"image {img.id!r} has no image-level label")
            categories.by_id(img.meta.image_level_label)

        grouped = group_detections(detections)
        unknown = sorted(set(grouped) - set(by_image))
        if unknown:
            raise IntegrityError(f"detections reference unknown image ids: {unknown}")

        annotations: list[Annotation] = []
        next_id = 1
        for image_id in sorted(by_image):
            img = by_image[image_id]
            dets = sorted(grouped.get(image_id, []), key=detection_sort_key)
            dets = clip_detections(dets, img.dims)
            trace = pipeline.apply(dets, img.dims)
            if not trace.kept:
                warnings.warn(
                    f"image {image_id!r}: no localizations survived filtering",
                    stacklevel=2,
                )
                continue
            new = assign_image_label(
                trace, img.meta.image_level_label, image_id=image_id, id_start=next_id
            )
            annotations.extend(new)
            next_id += len(new)

        return DatasetStore(
            images=tuple(images),
            categories=categories,
            annotations=tuple(annotations),
            split_tag=split_tag,
        )


def build_weak_dataset(
    images: Sequence[ImageRecord],
    categories: CategoryTable,
    detections: Iterable[tuple[str, Detection]],
    pipeline: FilterPipeline | None = None,
    *,
    split_tag: str | None = None,
) -> DatasetStore:
    return WeakLabeler(pipeline).build(images, categories, detections, split_tag=split_tag)


def validate_single_class(store: DatasetStore) -> list[str]:
    """Check per-image class purity; returns one message per violating image.

    An image violates purity when its annotations span more than one class or
    disagree with its image-level label (when it has one). An empty list
    means the store is clean.
    """
    violations = []
    for img in store.images:
        anns = store.annotations_by_image.get(img.id, ())
        labels = sorted({ann.category_id for ann in anns})
        if len(labels) > 1:
            violations.append(f"image {img.id!r}: annotations span classes {labels}")
            continue
        expected = img.meta.image_level_label if img.meta is not None else None
        if expected is not None and labels and labels[0] != expected:
            violations.append(
                f"image {img.id!r}: annotations are class {labels[0]} but the "
                f"image-level label is {expected}"
            )
    return violations
