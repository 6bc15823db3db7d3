import random

import pytest

_acceptance_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _acceptance_outcomes[name] = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance_outcomes.items():
        terminalreporter.write_line(f"[{outcome}] {name}")

from weakbox import (
    Annotation,
    BoundingBox,
    Category,
    CategoryTable,
    DatasetStore,
    Detection,
    ImageDims,
    ImageMeta,
    ImageRecord,
)


def make_categories(n: int, *, fallback_index: int = 0, names=None) -> CategoryTable:
    if names is None:
        names = [f"class_{i:02d}" for i in range(n)]
    return CategoryTable(
        tuple(
            Category(id=i + 1, name=name, is_fallback=(i == fallback_index))
            for i, name in enumerate(names)
        )
    )


def make_image(image_id: str, width: int = 100, height: int = 100, **meta) -> ImageRecord:
    return ImageRecord(
        id=image_id,
        file_name=f"{image_id}.jpg",
        dims=ImageDims(width, height),
        meta=ImageMeta(**meta) if meta else None,
    )


def det(x, y, w, h, score=1.0, label=None, source=None) -> Detection:
    return Detection(BoundingBox(x, y, w, h), score, label=label, source=source)


def random_box_inside(rng: random.Random, dims: ImageDims) -> BoundingBox:
    w = rng.randint(1, max(1, dims.width // 2))
    h = rng.randint(1, max(1, dims.height // 2))
    x = rng.randint(0, dims.width - w)
    y = rng.randint(0, dims.height - h)
    return BoundingBox(float(x), float(y), float(w), float(h))


def random_store(rng: random.Random, *, n_images=3, n_classes=3, max_anns_per_image=4) -> DatasetStore:
    categories = make_categories(n_classes)
    images = []
    annotations = []
    ann_id = 1
    for i in range(n_images):
        width = rng.randint(40, 200)
        height = rng.randint(40, 200)
        meta = None
        if rng.random() < 0.5:
            meta = ImageMeta(
                camera_angle_deg=float(rng.choice(range(0, 90, 10))),
                video_id=f"v{rng.randint(0, 3)}",
                frame_index=rng.randint(0, 30),
                image_level_label=rng.choice([c.id for c in categories]),
            )
        image = ImageRecord(
            id=f"img_{i:03d}", file_name=f"img_{i:03d}.png", dims=ImageDims(width, height), meta=meta
        )
        images.append(image)
        for _ in range(rng.randint(0, max_anns_per_image)):
            annotations.append(
                Annotation(
                    id=ann_id,
                    image_id=image.id,
                    category_id=rng.choice([c.id for c in categories]),
                    box=random_box_inside(rng, image.dims),
                    score=round(rng.random(), 3) if rng.random() < 0.5 else None,
                    provenance=rng.choice(("manual", "weak", "pseudo", "predicted")),
                )
            )
            ann_id += 1
    return DatasetStore(
        images=tuple(images),
        categories=categories,
        annotations=tuple(annotations),
        split_tag=rng.choice([None, "D_train", "C_train", "V_test"]),
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)
