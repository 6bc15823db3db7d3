"""Grouped train/test splitting and frame-manifest bookkeeping."""

from __future__ import annotations

import math
import random
from typing import Sequence

from .datasets import DatasetStore, IntegrityError
from .validation import check_fraction_open


def split_grouped(
    store: DatasetStore,
    train_fraction: float,
    group_key: str = "image",
    seed: int = 0,
    *,
    allow_degenerate: bool = False,
    train_tag: str | None = None,
    test_tag: str | None = None,
) -> tuple[DatasetStore, DatasetStore]:
    """Split a store into train/test by whole groups.

    With ``group_key="video"`` every frame of a video lands on the same side,
    preventing near-duplicate frames from leaking across the split. The train
    side receives ``round(train_fraction * n_groups)`` groups, chosen by a
    seeded shuffle, so repeated calls with the same seed are identical. A
    split that would leave either side empty raises unless
    ``allow_degenerate`` is set.
    """
    check_fraction_open(train_fraction, "train_fraction")
    if group_key not in ("image", "video"):
        raise ValueError(f"group_key must be 'image' or 'video', got {group_key!r}")

    if group_key == "image":
        group_of = {img.id: img.id for img in store.images}
    else:
        group_of = {}
        for img in store.images:
            if img.meta is None or img.meta.video_id is None:
                raise IntegrityError(f"image {img.id!r} has no video_id; cannot group by video")
            group_of[img.id] = img.meta.video_id

    groups = sorted(set(group_of.values()))
    if not groups:
        raise IntegrityError("cannot split a store with no images")
    n_train = round(train_fraction * len(groups))
    if n_train in (0, len(groups)) and not allow_degenerate:
        raise ValueError(
            f"split of {len(groups)} groups at fraction {train_fraction} leaves one side "
            "empty; pass allow_degenerate=True to permit this"
        )

    shuffled = list(groups)
    random.Random(seed).shuffle(shuffled)
    train_groups = set(shuffled[:n_train])

    def side(selected: bool, tag: str | None) -> DatasetStore:
        images = tuple(
            img for img in store.images if (group_of[img.id] in train_groups) == selected
        )
        ids = {img.id for img in images}
        annotations = tuple(ann for ann in store.annotations if ann.image_id in ids)
        return DatasetStore(
            images=images,
            categories=store.categories,
            annotations=annotations,
            split_tag=tag,
        )

    return side(True, train_tag), side(False, test_tag)


def frame_manifest(
    videos: Sequence[tuple[str, float]], fps: float
) -> list[tuple[str, int, float]]:
    """Expand (video_id, duration_seconds) pairs into (video_id, frame, timestamp) rows.

    Pure bookkeeping: each video contributes ``floor(duration * fps)`` frames
    stamped at ``frame / fps``; no media is decoded.
    """
    if not fps > 0:
        raise ValueError(f"fps must be positive, got {fps!r}")
    rows: list[tuple[str, int, float]] = []
    for video_id, duration in videos:
        if duration < 0:
            raise ValueError(f"video {video_id!r} has negative duration {duration!r}")
        # The 1e-9 nudge keeps exact products like 7 * 4 from losing a frame
        # to float representation.
        count = math.floor(duration * fps + 1e-9)
        rows.extend((video_id, i, i / fps) for i in range(count))
    return rows
