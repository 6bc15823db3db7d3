"""Dataset model and serialization.

The canonical on-disk form is a single COCO-style JSON document with
``images``, ``categories`` and ``annotations`` sections, written with sorted
keys so that saving the same store twice is byte-identical. A YOLO-style
directory export is provided for trainer hand-off; it preserves boxes to
within 1e-6 in normalized coordinates but drops scores and provenance.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping

from .boxes import BoundingBox, BoxError, Detection, ImageDims

PROVENANCE_VALUES = ("manual", "weak", "pseudo", "predicted")


class DatasetError(Exception):
    """Base class for dataset file and integrity failures."""


class ParseError(DatasetError):
    """The file is not syntactically valid."""


class SchemaError(DatasetError):
    """The file parses but lacks required structure."""


class IntegrityError(DatasetError):
    """References between records do not resolve."""


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    is_fallback: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.id, int) or isinstance(self.id, bool):
            raise SchemaError(f"category id must be an integer, got {self.id!r}")
        if not isinstance(self.name, str) or not self.name:
            raise SchemaError(f"category name must be a non-empty string, got {self.name!r}")


@dataclass(frozen=True)
class CategoryTable:
    """Ordered category list with exactly one designated fallback entry."""

    entries: tuple[Category, ...]

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        ids = [c.id for c in entries]
        names = [c.name for c in entries]
        if len(set(ids)) != len(ids):
            raise IntegrityError(f"category ids must be unique, got {ids}")
        if len(set(names)) != len(names):
            raise IntegrityError("category names must be unique")
        fallbacks = [c for c in entries if c.is_fallback]
        if len(fallbacks) != 1:
            raise IntegrityError(
                f"exactly one category must be flagged as fallback, found {len(fallbacks)}"
            )

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def _by_id(self) -> dict[int, Category]:
        return {c.id: c for c in self.entries}

    @cached_property
    def _by_name(self) -> dict[str, Category]:
        return {c.name: c for c in self.entries}

    def by_id(self, category_id: int) -> Category:
        try:
            return self._by_id[category_id]
        except KeyError:
            raise IntegrityError(f"unknown category id {category_id!r}") from None

    def by_name(self, name: str) -> Category:
        try:
            return self._by_name[name]
        except KeyError:
            raise IntegrityError(f"unknown category name {name!r}") from None

    def resolve(self, label: int | str) -> int:
        """Map a category id or name to a category id."""
        if isinstance(label, bool):
            raise IntegrityError(f"invalid category label {label!r}")
        if isinstance(label, int):
            return self.by_id(label).id
        return self.by_name(label).id

    def index_of(self, category_id: int) -> int:
        for i, c in enumerate(self.entries):
            if c.id == category_id:
                return i
        raise IntegrityError(f"unknown category id {category_id!r}")

    @property
    def fallback(self) -> Category:
        return next(c for c in self.entries if c.is_fallback)


@dataclass(frozen=True)
class ImageMeta:
    """Optional capture metadata for an image."""

    camera_angle_deg: float | None = None
    video_id: str | None = None
    frame_index: int | None = None
    image_level_label: int | None = None

    def __post_init__(self) -> None:
        if self.camera_angle_deg is not None:
            angle = float(self.camera_angle_deg)
            if not 0.0 <= angle <= 90.0:
                raise SchemaError(f"camera_angle_deg must lie in [0, 90], got {angle}")
            object.__setattr__(self, "camera_angle_deg", angle)
        if self.frame_index is not None:
            if not isinstance(self.frame_index, int) or self.frame_index < 0:
                raise SchemaError(f"frame_index must be a non-negative integer, got {self.frame_index!r}")


@dataclass(frozen=True)
class ImageRecord:
    id: str
    file_name: str
    dims: ImageDims
    meta: ImageMeta | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise SchemaError(f"image id must be a non-empty string, got {self.id!r}")
        if not isinstance(self.file_name, str) or not self.file_name:
            raise SchemaError(f"image file_name must be a non-empty string, got {self.file_name!r}")


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: str
    category_id: int
    box: BoundingBox
    score: float | None = None
    provenance: str = "manual"

    def __post_init__(self) -> None:
        if not isinstance(self.id, int) or isinstance(self.id, bool):
            raise SchemaError(f"annotation id must be an integer, got {self.id!r}")
        if self.score is not None:
            score = float(self.score)
            if not 0.0 <= score <= 1.0:
                raise SchemaError(f"annotation score must lie in [0, 1], got {score}")
            object.__setattr__(self, "score", score)
        if self.provenance not in PROVENANCE_VALUES:
            raise SchemaError(
                f"annotation provenance must be one of {PROVENANCE_VALUES}, got {self.provenance!r}"
            )


@dataclass(frozen=True)
class DatasetStore:
    """Validated, immutable collection of images, categories and annotations."""

    images: tuple[ImageRecord, ...]
    categories: CategoryTable
    annotations: tuple[Annotation, ...]
    split_tag: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        image_ids = [img.id for img in self.images]
        if len(set(image_ids)) != len(image_ids):
            raise IntegrityError("image ids must be unique")
        by_id = {img.id: img for img in self.images}
        ann_ids = set()
        for ann in self.annotations:
            if ann.id in ann_ids:
                raise IntegrityError(f"duplicate annotation id {ann.id}")
            ann_ids.add(ann.id)
            image = by_id.get(ann.image_id)
            if image is None:
                raise IntegrityError(
                    f"annotation {ann.id} references unknown image id {ann.image_id!r}"
                )
            self.categories.by_id(ann.category_id)
            box = ann.box
            dims = image.dims
            if (
                box.x < -1e-9
                or box.y < -1e-9
                or box.x2 > dims.width + 1e-9
                or box.y2 > dims.height + 1e-9
            ):
                raise IntegrityError(
                    f"annotation {ann.id} box {box.as_xywh()} is not clipped to "
                    f"image {image.id!r} ({dims.width}x{dims.height})"
                )
        for img in self.images:
            if img.meta is not None and img.meta.image_level_label is not None:
                self.categories.by_id(img.meta.image_level_label)

    @cached_property
    def _images_by_id(self) -> dict[str, ImageRecord]:
        return {img.id: img for img in self.images}

    def image_by_id(self, image_id: str) -> ImageRecord:
        try:
            return self._images_by_id[image_id]
        except KeyError:
            raise IntegrityError(f"unknown image id {image_id!r}") from None

    @cached_property
    def annotations_by_image(self) -> dict[str, tuple[Annotation, ...]]:
        grouped: dict[str, list[Annotation]] = {img.id: [] for img in self.images}
        for ann in self.annotations:
            grouped[ann.image_id].append(ann)
        return {k: tuple(v) for k, v in grouped.items()}

    def detection_rows(self, *, default_score: float = 1.0) -> list[tuple[str, Detection]]:
        """View annotations as (image_id, Detection) rows.

        Only ``predicted`` annotations keep their stored confidence; manual,
        weak and pseudo annotations are ground-truth-like and rank at
        ``default_score`` when used as predictions, so an operating score
        cutoff never thins them.
        """
        rows = []
        for ann in self.annotations:
            if ann.provenance == "predicted" and ann.score is not None:
                score = ann.score
            else:
                score = default_score
            rows.append((ann.image_id, Detection(ann.box, score, label=ann.category_id)))
        return rows

    def with_split_tag(self, split_tag: str | None) -> "DatasetStore":
        return replace(self, split_tag=split_tag)


# The 19-class bakery taxonomy used throughout the bundled fixtures: one
# catch-all class plus 18 named products.
BAKED_GOODS_CLASS_NAMES = (
    "Backware",
    "Bauernbrot",
    "Flößerbrot",
    "Salzstange",
    "Sonnenblumensemmel",
    "Kürbiskernsemmel",
    "Roggensemmel",
    "Dinkelsemmel",
    "Laugenstange Schinken-Käse",
    "Pfefferlaugenbrezel",
    "Kernige Schinken-Käse-Stange",
    "Schokocroissant",
    "Apfeltasche",
    "Quarktasche",
    "Mohnschnecke",
    "Nussschnecke",
    "Vanillehörnchen",
    "Kirschtasche",
    "Früchteschiffchen Erdbeere",
)


def baked_goods_categories() -> CategoryTable:
    """The default bakery category table; 'Backware' is the fallback class."""
    return CategoryTable(
        tuple(
            Category(id=i + 1, name=name, is_fallback=(i == 0))
            for i, name in enumerate(BAKED_GOODS_CLASS_NAMES)
        )
    )


def class_histogram(store: DatasetStore) -> list[tuple[Category, float]]:
    """Relative annotation frequency per category, in table order.

    Frequencies sum to 1 whenever the store has any annotations; categories
    without instances are reported with frequency 0.
    """
    counts = {c.id: 0 for c in store.categories}
    for ann in store.annotations:
        counts[ann.category_id] += 1
    total = len(store.annotations)
    if total == 0:
        return [(c, 0.0) for c in store.categories]
    return [(c, counts[c.id] / total) for c in store.categories]


# --- canonical JSON document ------------------------------------------------


def _meta_to_jsonable(meta: ImageMeta) -> dict:
    out: dict = {}
    if meta.camera_angle_deg is not None:
        out["camera_angle_deg"] = meta.camera_angle_deg
    if meta.video_id is not None:
        out["video_id"] = meta.video_id
    if meta.frame_index is not None:
        out["frame_index"] = meta.frame_index
    if meta.image_level_label is not None:
        out["image_level_label"] = meta.image_level_label
    return out


def store_to_jsonable(store: DatasetStore) -> dict:
    doc: dict = {
        "images": [
            {
                "id": img.id,
                "file_name": img.file_name,
                "width": img.dims.width,
                "height": img.dims.height,
                **({"meta": _meta_to_jsonable(img.meta)} if img.meta is not None else {}),
            }
            for img in store.images
        ],
        "categories": [
            {"id": c.id, "name": c.name, "is_fallback": c.is_fallback}
            for c in store.categories
        ],
        "annotations": [
            {
                "id": ann.id,
                "image_id": ann.image_id,
                "category_id": ann.category_id,
                "bbox": list(ann.box.as_xywh()),
                **({"score": ann.score} if ann.score is not None else {}),
                "provenance": ann.provenance,
            }
            for ann in store.annotations
        ],
    }
    if store.split_tag is not None:
        doc["split_tag"] = store.split_tag
    return doc


def dumps_canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class _Walker:
    """Schema access with positional context in error messages."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, path: str, message: str) -> SchemaError:
        return SchemaError(f"{self.source}: {path}: {message}")

    def require(self, obj: Mapping, path: str, key: str):
        if not isinstance(obj, Mapping):
            raise self.fail(path, f"expected an object, got {type(obj).__name__}")
        if key not in obj:
            raise self.fail(path, f"missing field {key!r}")
        return obj[key]

    def number(self, obj: Mapping, path: str, key: str) -> float:
        value = self.require(obj, path, key)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise self.fail(f"{path}.{key}", f"expected a number, got {value!r}")
        return float(value)

    def integer(self, obj: Mapping, path: str, key: str) -> int:
        value = self.require(obj, path, key)
        if not isinstance(value, int) or isinstance(value, bool):
            raise self.fail(f"{path}.{key}", f"expected an integer, got {value!r}")
        return value

    def string(self, obj: Mapping, path: str, key: str) -> str:
        value = self.require(obj, path, key)
        if not isinstance(value, str):
            raise self.fail(f"{path}.{key}", f"expected a string, got {value!r}")
        return value

    def array(self, obj: Mapping, path: str, key: str) -> list:
        value = self.require(obj, path, key)
        if not isinstance(value, list):
            raise self.fail(f"{path}.{key}", f"expected an array, got {value!r}")
        return value


def store_from_jsonable(doc, *, source: str = "<memory>") -> DatasetStore:
    walk = _Walker(source)
    if not isinstance(doc, Mapping):
        raise walk.fail("$", f"expected a top-level object, got {type(doc).__name__}")

    categories = []
    for i, raw in enumerate(walk.array(doc, "$", "categories")):
        path = f"categories[{i}]"
        is_fallback = raw.get("is_fallback", False) if isinstance(raw, Mapping) else False
        if not isinstance(is_fallback, bool):
            raise walk.fail(f"{path}.is_fallback", f"expected a boolean, got {is_fallback!r}")
        categories.append(
            Category(
                id=walk.integer(raw, path, "id"),
                name=walk.string(raw, path, "name"),
                is_fallback=is_fallback,
            )
        )

    images = []
    for i, raw in enumerate(walk.array(doc, "$", "images")):
        path = f"images[{i}]"
        meta = None
        if isinstance(raw, Mapping) and raw.get("meta") is not None:
            raw_meta = raw["meta"]
            if not isinstance(raw_meta, Mapping):
                raise walk.fail(f"{path}.meta", f"expected an object, got {raw_meta!r}")
            try:
                meta = ImageMeta(
                    camera_angle_deg=raw_meta.get("camera_angle_deg"),
                    video_id=raw_meta.get("video_id"),
                    frame_index=raw_meta.get("frame_index"),
                    image_level_label=raw_meta.get("image_level_label"),
                )
            except (SchemaError, TypeError, ValueError) as exc:
                raise walk.fail(f"{path}.meta", str(exc)) from None
        try:
            dims = ImageDims(walk.integer(raw, path, "width"), walk.integer(raw, path, "height"))
            images.append(
                ImageRecord(
                    id=walk.string(raw, path, "id"),
                    file_name=walk.string(raw, path, "file_name"),
                    dims=dims,
                    meta=meta,
                )
            )
        except BoxError as exc:
            raise walk.fail(path, str(exc)) from None

    annotations = []
    for i, raw in enumerate(walk.array(doc, "$", "annotations")):
        path = f"annotations[{i}]"
        bbox = walk.array(raw, path, "bbox")
        if len(bbox) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox
        ):
            raise walk.fail(f"{path}.bbox", f"expected [x, y, w, h] numbers, got {bbox!r}")
        try:
            box = BoundingBox(*[float(v) for v in bbox])
        except BoxError as exc:
            raise walk.fail(f"{path}.bbox", str(exc)) from None
        score = raw.get("score") if isinstance(raw, Mapping) else None
        if score is not None and (not isinstance(score, (int, float)) or isinstance(score, bool)):
            raise walk.fail(f"{path}.score", f"expected a number, got {score!r}")
        provenance = raw.get("provenance", "manual") if isinstance(raw, Mapping) else "manual"
        try:
            annotations.append(
                Annotation(
                    id=walk.integer(raw, path, "id"),
                    image_id=walk.string(raw, path, "image_id"),
                    category_id=walk.integer(raw, path, "category_id"),
                    box=box,
                    score=score,
                    provenance=provenance,
                )
            )
        except SchemaError as exc:
            raise walk.fail(path, str(exc)) from None

    split_tag = doc.get("split_tag")
    if split_tag is not None and not isinstance(split_tag, str):
        raise walk.fail("$.split_tag", f"expected a string, got {split_tag!r}")

    try:
        return DatasetStore(
            images=tuple(images),
            categories=CategoryTable(tuple(categories)),
            annotations=tuple(annotations),
            split_tag=split_tag,
        )
    except IntegrityError as exc:
        raise IntegrityError(f"{source}: {exc}") from None


def load_dataset(path: str | Path) -> DatasetStore:
    """Load and fully validate a canonical dataset document."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return store_from_jsonable(doc, source=str(path))


def save_dataset(store: DatasetStore, path: str | Path, format: str = "coco_like") -> None:
    """Write a store to disk; ``coco_like`` is lossless, ``yolo_like`` keeps boxes only."""
    if format == "coco_like":
        Path(path).write_text(dumps_canonical(store_to_jsonable(store)), encoding="utf-8")
    elif format == "yolo_like":
        save_yolo(store, path)
    else:
        raise ValueError(f"unknown dataset format {format!r}")


# --- YOLO-style directory export ---------------------------------------------


def _safe_stem(image_id: str, taken: set[str]) -> str:
    stem = re.sub(r"[^A-Za-z0-9._-]", "_", image_id) or "image"
    candidate = stem
    n = 1
    while candidate in taken:
        n += 1
        candidate = f"{stem}-{n}"
    taken.add(candidate)
    return candidate


def yolo_line(ann: Annotation, dims: ImageDims, class_index: int) -> str:
    cx = (ann.box.x + ann.box.w / 2.0) / dims.width
    cy = (ann.box.y + ann.box.h / 2.0) / dims.height
    w = ann.box.w / dims.width
    h = ann.box.h / dims.height
    return f"{class_index} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}"


def save_yolo(store: DatasetStore, directory: str | Path) -> None:
    directory = Path(directory)
    labels_dir = directory / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)

    (directory / "classes.txt").write_text(
        "".join(c.name + "\n" for c in store.categories), encoding="utf-8"
    )
    fallback_index = next(i for i, c in enumerate(store.categories) if c.is_fallback)
    meta_doc = {"fallback_index": fallback_index}
    if store.split_tag is not None:
        meta_doc["split_tag"] = store.split_tag
    (directory / "meta.json").write_text(dumps_canonical(meta_doc), encoding="utf-8")

    taken: set[str] = set()
    index_of = {c.id: i for i, c in enumerate(store.categories)}
    by_image = store.annotations_by_image
    manifest_lines = []
    for img in store.images:
        stem = _safe_stem(img.id, taken)
        label_file = f"labels/{stem}.txt"
        record = {
            "id": img.id,
            "file_name": img.file_name,
            "width": img.dims.width,
            "height": img.dims.height,
            "label_file": label_file,
        }
        if img.meta is not None:
            record["meta"] = _meta_to_jsonable(img.meta)
        manifest_lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False))
        lines = [
            yolo_line(ann, img.dims, index_of[ann.category_id]) for ann in by_image[img.id]
        ]
        (directory / label_file).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    (directory / "images.jsonl").write_text(
        "".join(line + "\n" for line in manifest_lines), encoding="utf-8"
    )


def load_yolo(directory: str | Path) -> DatasetStore:
    """Rebuild a store from a YOLO-style export directory.

    Scores and provenance are not represented in this format; annotations
    come back with provenance ``manual`` and fresh sequential ids.
    """
    directory = Path(directory)
    names = [
        line for line in (directory / "classes.txt").read_text(encoding="utf-8").splitlines()
    ]
    meta_path = directory / "meta.json"
    meta_doc = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    fallback_index = meta_doc.get("fallback_index", 0)
    categories = CategoryTable(
        tuple(
            Category(id=i + 1, name=name, is_fallback=(i == fallback_index))
            for i, name in enumerate(names)
        )
    )

    images: list[ImageRecord] = []
    annotations: list[Annotation] = []
    next_ann_id = 1
    manifest = (directory / "images.jsonl").read_text(encoding="utf-8")
    for lineno, line in enumerate(manifest.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{directory / 'images.jsonl'}:{lineno}: {exc.msg}") from None
        walk = _Walker(f"{directory / 'images.jsonl'}:{lineno}")
        raw_meta = record.get("meta")
        meta = (
            ImageMeta(
                camera_angle_deg=raw_meta.get("camera_angle_deg"),
                video_id=raw_meta.get("video_id"),
                frame_index=raw_meta.get("frame_index"),
                image_level_label=raw_meta.get("image_level_label"),
            )
            if isinstance(raw_meta, Mapping)
            else None
        )
        dims = ImageDims(walk.integer(record, "$", "width"), walk.integer(record, "$", "height"))
        image = ImageRecord(
            id=walk.string(record, "$", "id"),
            file_name=walk.string(record, "$", "file_name"),
            dims=dims,
            meta=meta,
        )
        images.append(image)
        label_path = directory / walk.string(record, "$", "label_file")
        for ln, label_line in enumerate(label_path.read_text(encoding="utf-8").splitlines(), start=1):
            if not label_line.strip():
                continue
            parts = label_line.split()
            if len(parts) != 5:
                raise SchemaError(f"{label_path}:{ln}: expected 5 fields, got {len(parts)}")
            try:
                class_index = int(parts[0])
                cx, cy, w, h = (float(v) for v in parts[1:])
            except ValueError:
                raise SchemaError(f"{label_path}:{ln}: malformed numeric field") from None
            if not 0 <= class_index < len(categories):
                raise IntegrityError(f"{label_path}:{ln}: class index {class_index} out of range")
            box = BoundingBox(
                (cx - w / 2.0) * dims.width,
                (cy - h / 2.0) * dims.height,
                w * dims.width,
                h * dims.height,
            ).clip(dims)
            annotations.append(
                Annotation(
                    id=next_ann_id,
                    image_id=image.id,
                    category_id=categories.entries[class_index].id,
                    box=box,
                )
            )
            next_ann_id += 1

    return DatasetStore(
        images=tuple(images),
        categories=categories,
        annotations=tuple(annotations),
        split_tag=meta_doc.get("split_tag"),
    )
