"""Line-delimited interchange streams: detections, tracks, queries, embeddings.

Every stream is JSON Lines. Lines starting with ``#`` are headers or comments
and are skipped by readers; writers use them to echo the effective
configuration for provenance. Unknown fields in records are ignored so that
producers may attach extra context.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .boxes import BoundingBox, BoxError, Detection
from .datasets import ParseError, SchemaError

QUERY_ORIGINS = ("manual", "predicted")


@dataclass(frozen=True)
class TrackRecord:
    """One tracked box: (video, frame, instance) plus geometry, label, score."""

    video_id: str
    frame_index: int
    instance_id: int
    box: BoundingBox
    label: int
    score: float

    def __post_init__(self) -> None:
        if not isinstance(self.frame_index, int) or self.frame_index < 0:
            raise SchemaError(f"frame_index must be a non-negative integer, got {self.frame_index!r}")
        if not isinstance(self.instance_id, int) or isinstance(self.instance_id, bool):
            raise SchemaError(f"instance_id must be an integer, got {self.instance_id!r}")
        if not 0.0 <= float(self.score) <= 1.0:
            raise SchemaError(f"track score must lie in [0, 1], got {self.score!r}")
        object.__setattr__(self, "score", float(self.score))


def _iter_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc.msg}") from None
            if not isinstance(record, dict):
                raise SchemaError(f"{path}:{lineno}: expected a JSON object per line")
            yield lineno, record


def _get_number(record: Mapping, key: str, context: str) -> float:
    if key not in record:
        raise SchemaError(f"{context}: missing field {key!r}")
    value = record[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaError(f"{context}: field {key!r} must be a number, got {value!r}")
    return float(value)


def _get_str(record: Mapping, key: str, context: str) -> str:
    if key not in record:
        raise SchemaError(f"{context}: missing field {key!r}")
    value = record[key]
    if not isinstance(value, str):
        raise SchemaError(f"{context}: field {key!r} must be a string, got {value!r}")
    return value


def _get_int(record: Mapping, key: str, context: str) -> int:
    if key not in record:
        raise SchemaError(f"{context}: missing field {key!r}")
    value = record[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(f"{context}: field {key!r} must be an integer, got {value!r}")
    return value


def _box_from(record: Mapping, context: str) -> BoundingBox:
    try:
        return BoundingBox(
            _get_number(record, "x", context),
            _get_number(record, "y", context),
            _get_number(record, "w", context),
            _get_number(record, "h", context),
        )
    except BoxError as exc:
        raise SchemaError(f"{context}: {exc}") from None


def config_header(config: Mapping, *, tool: str) -> str:
    """Comment line echoing the effective configuration, for provenance."""
    return f"# {tool} config: " + json.dumps(dict(config), sort_keys=True, ensure_ascii=False)


# --- detection stream --------------------------------------------------------


def read_detections(path: str | Path) -> list[tuple[str, Detection]]:
    """Read (image_id, Detection) rows from a detection stream file."""
    rows = []
    for lineno, record in _iter_records(path):
        context = f"{Path(path)}:{lineno}"
        label = record.get("label")
        if label is not None and not isinstance(label, (int, str)):
            raise SchemaError(f"{context}: field 'label' must be an integer or string, got {label!r}")
        source = record.get("source")
        if source is not None and not isinstance(source, str):
            raise SchemaError(f"{context}: field 'source' must be a string, got {source!r}")
        score = _get_number(record, "score", context)
        if not 0.0 <= score <= 1.0:
            raise SchemaError(f"{context}: field 'score' must lie in [0, 1], got {score}")
        rows.append(
            (
                _get_str(record, "image_id", context),
                Detection(_box_from(record, context), score, label=label, source=source),
            )
        )
    return rows


def detection_to_jsonable(image_id: str, det: Detection) -> dict:
    record: dict = {
        "image_id": image_id,
        "x": det.box.x,
        "y": det.box.y,
        "w": det.box.w,
        "h": det.box.h,
        "score": det.score,
    }
    if det.label is not None:
        record["label"] = det.label
    if det.source is not None:
        record["source"] = det.source
    return record


def write_detections(
    path: str | Path,
    rows: Iterable[tuple[str, Detection]],
    *,
    header: str | None = None,
) -> None:
    lines = [] if header is None else [header]
    for image_id, det in rows:
        lines.append(json.dumps(detection_to_jsonable(image_id, det), sort_keys=True, ensure_ascii=False))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def group_detections(rows: Iterable[tuple[str, Detection]]) -> dict[str, list[Detection]]:
    grouped: dict[str, list[Detection]] = {}
    for image_id, det in rows:
        grouped.setdefault(image_id, []).append(det)
    return grouped


# --- track stream -------------------------------------------------------------


def read_tracks(path: str | Path) -> list[TrackRecord]:
    records = []
    seen: dict[tuple[str, int, int], int] = {}
    for lineno, record in _iter_records(path):
        context = f"{Path(path)}:{lineno}"
        try:
            parsed = TrackRecord(
                video_id=_get_str(record, "video_id", context),
                frame_index=_get_int(record, "frame_index", context),
                instance_id=_get_int(record, "instance_id", context),
                box=_box_from(record, context),
                label=_get_int(record, "label", context),
                score=_get_number(record, "score", context),
            )
        except SchemaError as exc:
            message = str(exc)
            raise SchemaError(message if message.startswith(context) else f"{context}: {exc}") from None
        key = (parsed.video_id, parsed.frame_index, parsed.instance_id)
        if key in seen:
            raise SchemaError(
                f"{context}: duplicate track record for {key} (first seen on line {seen[key]})"
            )
        seen[key] = lineno
        records.append(parsed)
    return records


def track_to_jsonable(rec: TrackRecord) -> dict:
    return {
        "video_id": rec.video_id,
        "frame_index": rec.frame_index,
        "instance_id": rec.instance_id,
        "x": rec.box.x,
        "y": rec.box.y,
        "w": rec.box.w,
        "h": rec.box.h,
        "label": rec.label,
        "score": rec.score,
    }


def write_tracks(path: str | Path, records: Iterable[TrackRecord], *, header: str | None = None) -> None:
    lines = [] if header is None else [header]
    for rec in records:
        lines.append(json.dumps(track_to_jsonable(rec), sort_keys=True, ensure_ascii=False))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# --- first-frame query stream -------------------------------------------------
# Query files reuse the detection record layout plus "origin" and
# "instance_id"; image_id doubles as the video id.


def read_query_rows(path: str | Path) -> list[dict]:
    rows = []
    for lineno, record in _iter_records(path):
        context = f"{Path(path)}:{lineno}"
        origin = _get_str(record, "origin", context)
        if origin not in QUERY_ORIGINS:
            raise SchemaError(f"{context}: origin must be one of {QUERY_ORIGINS}, got {origin!r}")
        rows.append(
            {
                "video_id": _get_str(record, "video_id", context),
                "instance_id": record.get("instance_id"),
                "box": _box_from(record, context),
                "label": record.get("label"),
                "score": _get_number(record, "score", context),
                "origin": origin,
            }
        )
    return rows


# --- embedding set ------------------------------------------------------------


def read_embedding_rows(path: str | Path) -> list[tuple[str, tuple[float, ...]]]:
    rows = []
    for lineno, record in _iter_records(path):
        context = f"{Path(path)}:{lineno}"
        name = _get_str(record, "name", context)
        vector = record.get("vector")
        if (
            not isinstance(vector, list)
            or not vector
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vector)
        ):
            raise SchemaError(f"{context}: field 'vector' must be a non-empty number array")
        rows.append((name, tuple(float(v) for v in vector)))
    return rows


def write_embedding_rows(
    path: str | Path,
    rows: Iterable[tuple[str, Iterable[float]]],
    *,
    header: str | None = None,
) -> None:
    lines = [] if header is None else [header]
    for name, vector in rows:
        lines.append(
            json.dumps({"name": name, "vector": [float(v) for v in vector]}, ensure_ascii=False)
        )
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
