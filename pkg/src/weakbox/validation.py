"""Input validation helpers shared across estimators and loaders."""

from __future__ import annotations

from typing import Iterable, Sequence

from .boxes import BoxError, Detection, ImageDims


def check_unit_interval(
    value: float,
    name: str,
    *,
    low_open: bool = False,
    high_open: bool = False,
) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValueError(f"{name} must be a number, got {value!r}")
    value = float(value)
    low_ok = value > 0.0 if low_open else value >= 0.0
    high_ok = value < 1.0 if high_open else value <= 1.0
    if not (low_ok and high_ok):
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {value!r}")
    return value


def check_int_at_least(value: int, name: str, minimum: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_fraction_open(value: float, name: str) -> float:
    """Strictly interior fraction, e.g. a train split ratio."""
    return check_unit_interval(value, name, low_open=True, high_open=True)


def check_detections(dets: Iterable[Detection], name: str = "detections") -> list[Detection]:
    out = list(dets)
    for i, det in enumerate(out):
        if not isinstance(det, Detection):
            raise ValueError(f"{name}[{i}] must be a Detection, got {det!r}")
    return out


def check_scored(dets: Sequence[Detection], name: str = "detections") -> None:
    # Detection construction already bounds scores; here we only reject the
    # conventions some callers use for "scoreless".
    for i, det in enumerate(dets):
        if det.score is None:  # pragma: no cover - Detection forbids this
            raise ValueError(f"{name}[{i}] has no score")


def check_boxes_inside(
    dets: Sequence[Detection], dims: ImageDims, name: str = "detections"
) -> None:
    for i, det in enumerate(dets):
        box = det.box
        if box.x < -1e-9 or box.y < -1e-9 or box.x2 > dims.width + 1e-9 or box.y2 > dims.height + 1e-9:
            raise BoxError(
                f"{name}[{i}] box {box.as_xywh()} extends beyond the "
                f"{dims.width}x{dims.height} image; clip detections first"
            )


def check_iou_thresholds(thresholds: Sequence[float], name: str = "iou_thresholds") -> tuple[float, ...]:
    values = tuple(float(t) for t in thresholds)
    if not values:
        raise ValueError(f"{name} must not be empty")
    for t in values:
        check_unit_interval(t, name, low_open=True, high_open=True)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly increasing, got {values}")
    return values
