"""COCO-style detection evaluation, significance testing, and similarity analysis.

Average precision uses 101-point interpolation over the recall grid
{0.00, 0.01, ..., 1.00}, with precision at recall r taken as the maximum
precision among operating points whose recall is at least r. mAP averages AP
over the IoU thresholds 0.50:0.95 (step 0.05) and then over every class with
at least one ground-truth instance; classes without instances are excluded
from the mean rather than scored zero. The class-agnostic variant (aAP)
erases labels before matching, isolating localization quality from
classification. Area-range and max-detection facets of the full COCO
protocol are deliberately omitted: these trays are a single-scale regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .boxes import BoundingBox, Detection, detection_sort_key, iou, nms
from .datasets import CategoryTable, DatasetStore, IntegrityError
from .validation import check_int_at_least, check_iou_thresholds, check_unit_interval

COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_GRID = tuple(i / 100 for i in range(101))

PredRows = Sequence[tuple[str, Detection]]
GtRow = tuple[str, int, BoundingBox]


class EvalError(ValueError):
    """Evaluation cannot proceed on these inputs."""


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class ZTestResult:
    z: float
    p_value: float
    significant: bool
    alpha: float


@dataclass(frozen=True)
class EvalReport:
    map: float
    per_iou_ap: dict[float, float]
    per_class_ap: dict[int, float]
    cap_range: tuple[float, float] | None
    aap: float
    precision: float | None
    recall: float
    counts: MatchCounts
    per_angle: dict[float, float] | None = None
    per_subset: dict[str, dict[str, float]] | None = None
    config: dict | None = None


def match_detections(
    preds: Sequence[Detection],
    gt_boxes: Sequence[BoundingBox],
    iou_threshold: float,
    *,
    gt_labels: Sequence[int | str | None] | None = None,
) -> list[int | None]:
    """Greedy one-to-one matching for a single image.

    Predictions are visited in descending score order (deterministic
    tie-break); each takes the unmatched ground-truth box of highest IoU at
    or above the threshold, restricted to equal labels when ``gt_labels`` is
    given. Returns the matched ground-truth index per prediction, aligned
    with the input order.
    """
    check_unit_interval(iou_threshold, "iou_threshold", low_open=True, high_open=True)
    if gt_labels is not None and len(gt_labels) != len(gt_boxes):
        raise ValueError("gt_labels must align with gt_boxes")
    order = sorted(range(len(preds)), key=lambda i: detection_sort_key(preds[i]))
    result: list[int | None] = [None] * len(preds)
    taken: set[int] = set()
    for i in order:
        det = preds[i]
        best_j, best_iou = None, 0.0
        for j, gt in enumerate(gt_boxes):
            if j in taken:
                continue
            if gt_labels is not None and gt_labels[j] != det.label:
                continue
            value = iou(det.box, gt)
            if value >= iou_threshold and value > best_iou:
                best_j, best_iou = j, value
        if best_j is not None:
            taken.add(best_j)
            result[i] = best_j
    return result


def _global_pred_order(pred_rows: PredRows) -> list[tuple[str, Detection]]:
    return sorted(pred_rows, key=lambda row: (-row[1].score, row[0]) + detection_sort_key(row[1])[1:])


def _match_flags(
    pred_rows: PredRows,
    gt_rows: Sequence[GtRow],
    iou_threshold: float,
) -> list[bool]:
    """True/false-positive flags in global descending-score order.

    Inputs must already be restricted to a single category (or have had
    labels erased for the class-agnostic variant); labels play no role here.
    """
    gts_by_image: dict[str, list[BoundingBox]] = {}
    for image_id, _category, box in gt_rows:
        gts_by_image.setdefault(image_id, []).append(box)
    matched: dict[str, set[int]] = {image_id: set() for image_id in gts_by_image}
    flags: list[bool] = []
    for image_id, det in _global_pred_order(pred_rows):
        candidates = gts_by_image.get(image_id, [])
        taken = matched.get(image_id, set())
        best_j, best_iou = None, 0.0
        for j, gt in enumerate(candidates):
            if j in taken:
                continue
            value = iou(det.box, gt)
            if value >= iou_threshold and value > best_iou:
                best_j, best_iou = j, value
        if best_j is None:
            flags.append(False)
        else:
            taken.add(best_j)
            flags.append(True)
    return flags


def _ap_from_flags(flags: Sequence[bool], n_gt: int) -> float:
    if n_gt == 0:
        raise EvalError("AP is undefined without ground-truth instances")
    if not flags:
        return 0.0
    tp = fp = 0
    recalls: list[float] = []
    precisions: list[float] = []
    for is_tp in flags:
        tp += 1 if is_tp else 0
        fp += 0 if is_tp else 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    total = 0.0
    j = 0
    for r in RECALL_GRID:
        while j < len(recalls) and recalls[j] < r:
            j += 1
        if j == len(recalls):
            break
        total += precisions[j]
    return total / len(RECALL_GRID)


def average_precision(
    pred_rows: PredRows,
    gt_rows: Sequence[GtRow],
    iou_threshold: float,
) -> float | None:
    """101-point interpolated AP for one category's rows; None without ground truth."""
    check_unit_interval(iou_threshold, "iou_threshold", low_open=True, high_open=True)
    if not gt_rows:
        return None
    return _ap_from_flags(_match_flags(pred_rows, gt_rows, iou_threshold), len(gt_rows))


def _map_block(
    pred_rows: PredRows,
    gt_rows: Sequence[GtRow],
    category_ids: Sequence[int],
    thresholds: Sequence[float],
) -> tuple[float, dict[float, float], dict[int, float], float]:
    """(mAP, AP-by-threshold, AP-by-class, class-agnostic AP) over given rows."""
    gt_count = {c: 0 for c in category_ids}
    for _image_id, category_id, _box in gt_rows:
        if category_id in gt_count:
            gt_count[category_id] += 1
    classes = [c for c in category_ids if gt_count[c] > 0]
    if not classes:
        raise EvalError("nothing to evaluate: no ground-truth instances")

    ap: dict[tuple[int, float], float] = {}
    for c in classes:
        preds_c = [(img, det) for img, det in pred_rows if det.label == c]
        gts_c = [row for row in gt_rows if row[1] == c]
        for t in thresholds:
            ap[(c, t)] = _ap_from_flags(_match_flags(preds_c, gts_c, t), len(gts_c))

    per_class = {c: sum(ap[(c, t)] for t in thresholds) / len(thresholds) for c in classes}
    per_iou = {t: sum(ap[(c, t)] for c in classes) / len(classes) for t in thresholds}
    map_value = sum(per_class.values()) / len(per_class)

    erased_preds = [(img, Detection(det.box, det.score)) for img, det in pred_rows]
    erased_gts = [(img, 0, box) for img, _category, box in gt_rows]
    aap = sum(
        _ap_from_flags(_match_flags(erased_preds, erased_gts, t), len(erased_gts))
        for t in thresholds
    ) / len(thresholds)
    return map_value, per_iou, per_class, aap


def resolve_pred_rows(
    preds: DatasetStore | PredRows,
    gts: DatasetStore,
) -> list[tuple[str, Detection]]:
    """Normalize predictions to (image_id, Detection) rows against a ground truth store.

    String labels are resolved to category ids; unknown images or labels are
    integrity errors. Store-backed predictions rank ground-truth-like
    annotations at score 1.0, and when the prediction store carries its own
    category table, ids are translated through category names so stores with
    different id assignments still compare correctly.
    """
    if isinstance(preds, DatasetStore):
        rows = preds.detection_rows(default_score=1.0)
        if preds.categories != gts.categories:
            name_of = {c.id: c.name for c in preds.categories}
            rows = [
                (
                    image_id,
                    Detection(
                        det.box,
                        det.score,
                        label=None if det.label is None else name_of[det.label],
                        source=det.source,
                    ),
                )
                for image_id, det in rows
            ]
    else:
        rows = list(preds)
    out = []
    for image_id, det in rows:
        gts.image_by_id(image_id)
        label = det.label
        if label is not None:
            label = gts.categories.resolve(label)
            if label != det.label:
                det = Detection(det.box, det.score, label=label, source=det.source)
        out.append((image_id, det))
    return out


def _gt_rows(gts: DatasetStore) -> list[GtRow]:
    return [(ann.image_id, ann.category_id, ann.box) for ann in gts.annotations]


class DetectionEvaluator(BaseEstimator):
    """Scores predictions against a ground-truth store.

    Parameters mirror the report facets: ``iou_thresholds`` drive mAP,
    ``pr_iou`` and ``pr_score_cutoff`` fix the precision/recall operating
    point, and ``nms_iou`` (optional) applies greedy non-maximum suppression
    to predictions per image before any metric is computed.
    """

    def __init__(
        self,
        iou_thresholds: Sequence[float] = COCO_IOU_THRESHOLDS,
        pr_iou: float = 0.75,
        pr_score_cutoff: float = 0.5,
        exclude_fallback_from_cap_range: bool = True,
        nms_iou: float | None = None,
        nms_class_agnostic: bool = True,
    ):
        self.iou_thresholds = iou_thresholds
        self.pr_iou = pr_iou
        self.pr_score_cutoff = pr_score_cutoff
        self.exclude_fallback_from_cap_range = exclude_fallback_from_cap_range
        self.nms_iou = nms_iou
        self.nms_class_agnostic = nms_class_agnostic

    def fit(self, X=None, y=None):
        return self

    def _checked_thresholds(self) -> tuple[float, ...]:
        return check_iou_thresholds(self.iou_thresholds)

    def _prepare(self, preds: DatasetStore | PredRows, gts: DatasetStore) -> list[tuple[str, Detection]]:
        rows = resolve_pred_rows(preds, gts)
        if self.nms_iou is None:
            return rows
        check_unit_interval(self.nms_iou, "nms_iou", low_open=True, high_open=True)
        out: list[tuple[str, Detection]] = []
        by_image: dict[str, list[Detection]] = {}
        for image_id, det in rows:
            by_image.setdefault(image_id, []).append(det)
        for image_id in sorted(by_image):
            for det in nms(by_image[image_id], self.nms_iou, class_agnostic=self.nms_class_agnostic):
                out.append((image_id, det))
        return out

    def precision_recall(
        self,
        preds: DatasetStore | PredRows,
        gts: DatasetStore,
        *,
        class_agnostic: bool = False,
    ) -> tuple[float | None, float, MatchCounts]:
        """P/R at the configured IoU and score cutoff; P is None without survivors."""
        pr_iou = check_unit_interval(self.pr_iou, "pr_iou", low_open=True, high_open=True)
        cutoff = check_unit_interval(self.pr_score_cutoff, "pr_score_cutoff")
        pred_rows = [
            (img, det) for img, det in self._prepare(preds, gts) if det.score >= cutoff
        ]
        gt_rows = _gt_rows(gts)
        if not gt_rows:
            raise EvalError("nothing to evaluate: no ground-truth instances")
        tp = 0
        if class_agnostic:
            flags = _match_flags(
                [(img, Detection(det.box, det.score)) for img, det in pred_rows],
                [(img, 0, box) for img, _c, box in gt_rows],
                pr_iou,
            )
            tp = sum(flags)
        else:
            categories = sorted({row[1] for row in gt_rows})
            for c in categories:
                flags = _match_flags(
                    [(img, det) for img, det in pred_rows if det.label == c],
                    [row for row in gt_rows if row[1] == c],
                    pr_iou,
                )
                tp += sum(flags)
            # predictions of classes absent from the ground truth are false
            # positives; they never enter a per-class matching above
        n_pred = len(pred_rows)
        fp = n_pred - tp
        fn = len(gt_rows) - tp
        precision = tp / n_pred if n_pred else None
        recall = tp / len(gt_rows)
        return precision, recall, MatchCounts(tp=tp, fp=fp, fn=fn)

    def angle_report(self, preds: DatasetStore | PredRows, gts: DatasetStore) -> dict[float, float]:
        """mAP per camera angle; every ground-truth image must carry an angle."""
        thresholds = self._checked_thresholds()
        angles: dict[float, set[str]] = {}
        for img in gts.images:
            if img.meta is None or img.meta.camera_angle_deg is None:
                raise IntegrityError(f"image {img.id!r} has no camera_angle_deg metadata")
            angles.setdefault(img.meta.camera_angle_deg, set()).add(img.id)
        pred_rows = self._prepare(preds, gts)
        gt_rows = _gt_rows(gts)
        category_ids = [c.id for c in gts.categories]
        report = {}
        for angle in sorted(angles):
            ids = angles[angle]
            map_value, _, _, _ = _map_block(
                [(img, det) for img, det in pred_rows if img in ids],
                [row for row in gt_rows if row[0] in ids],
                category_ids,
                thresholds,
            )
            report[angle] = map_value
        return report

    def subset_reports(self, preds: DatasetStore | PredRows, gts: DatasetStore) -> dict[str, dict[str, float]]:
        """mAP/aAP on the full set and on the first frame of each video.

        Only meaningful for frame datasets; requires frame_index metadata on
        at least one image.
        """
        thresholds = self._checked_thresholds()
        first_frames = {
            img.id
            for img in gts.images
            if img.meta is not None and img.meta.frame_index == 0
        }
        if not first_frames:
            raise IntegrityError("no image carries frame_index metadata; subset report needs frame datasets")
        pred_rows = self._prepare(preds, gts)
        gt_rows = _gt_rows(gts)
        category_ids = [c.id for c in gts.categories]
        out = {}
        for name, ids in (("full", None), ("first_frames", first_frames)):
            rows_p = pred_rows if ids is None else [(i, d) for i, d in pred_rows if i in ids]
            rows_g = gt_rows if ids is None else [r for r in gt_rows if r[0] in ids]
            map_value, _, _, aap = _map_block(rows_p, rows_g, category_ids, thresholds)
            out[name] = {"map": map_value, "aap": aap}
        return out

    def evaluate(
        self,
        preds: DatasetStore | PredRows,
        gts: DatasetStore,
        *,
        with_angles: bool = False,
        with_subsets: bool = False,
    ) -> EvalReport:
        thresholds = self._checked_thresholds()
        pred_rows = self._prepare(preds, gts)
        gt_rows = _gt_rows(gts)
        category_ids = [c.id for c in gts.categories]
        map_value, per_iou, per_class, aap = _map_block(pred_rows, gt_rows, category_ids, thresholds)

        cap_pool = dict(per_class)
        if self.exclude_fallback_from_cap_range:
            cap_pool.pop(gts.categories.fallback.id, None)
        cap_range = (min(cap_pool.values()), max(cap_pool.values())) if cap_pool else None

        precision, recall, counts = self.precision_recall(preds, gts)
        per_angle = self.angle_report(preds, gts) if with_angles else None
        per_subset = self.subset_reports(preds, gts) if with_subsets else None
        return EvalReport(
            map=map_value,
            per_iou_ap=per_iou,
            per_class_ap=per_class,
            cap_range=cap_range,
            aap=aap,
            precision=precision,
            recall=recall,
            counts=counts,
            per_angle=per_angle,
            per_subset=per_subset,
            config=self.get_params(),
        )

    def compare(
        self,
        preds_a: DatasetStore | PredRows,
        preds_b: DatasetStore | PredRows,
        gts: DatasetStore,
        *,
        alpha: float = 0.05,
    ) -> dict[str, ZTestResult]:
        """Significance of the recall and precision gap between two prediction sets."""
        _, _, counts_a = self.precision_recall(preds_a, gts)
        _, _, counts_b = self.precision_recall(preds_b, gts)
        n_gt = counts_a.tp + counts_a.fn
        out = {
            "recall": proportion_z_test(counts_a.tp, n_gt, counts_b.tp, n_gt, alpha=alpha)
        }
        n_a = counts_a.tp + counts_a.fp
        n_b = counts_b.tp + counts_b.fp
        if n_a > 0 and n_b > 0:
            out["precision"] = proportion_z_test(counts_a.tp, n_a, counts_b.tp, n_b, alpha=alpha)
        return out


def map_coco(
    preds: DatasetStore | PredRows,
    gts: DatasetStore,
    evaluator: DetectionEvaluator | None = None,
) -> EvalReport:
    return (evaluator or DetectionEvaluator()).evaluate(preds, gts)


# --- proportion z-test --------------------------------------------------------


def proportion_z_test(
    successes_a: int,
    n_a: int,
    successes_b: int,
    n_b: int,
    *,
    alpha: float = 0.05,
) -> ZTestResult:
    """Two-sided pooled two-proportion z-test.

    z = (p_a - p_b) / sqrt(p_pool (1 - p_pool) (1/n_a + 1/n_b)) with the
    pooled success rate p_pool; the p-value comes from the standard normal.
    When the pooled rate is 0 or 1 both proportions are equal and z is 0.
    """
    for successes, n, side in ((successes_a, n_a, "a"), (successes_b, n_b, "b")):
        check_int_at_least(n, f"n_{side}", 1)
        check_int_at_least(successes, f"successes_{side}", 0)
        if successes > n:
            raise ValueError(f"successes_{side}={successes} exceeds n_{side}={n}")
    check_unit_interval(alpha, "alpha", low_open=True, high_open=True)
    p_a = successes_a / n_a
    p_b = successes_b / n_b
    pooled = (successes_a + successes_b) / (n_a + n_b)
    variance = pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b)
    if variance == 0.0:
        z = 0.0
    else:
        z = (p_a - p_b) / math.sqrt(variance)
    p_value = math.erfc(abs(z) / math.sqrt(2.0))
    return ZTestResult(z=z, p_value=p_value, significant=p_value < alpha, alpha=alpha)


# --- embedding similarity -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Named fixed-dimension vectors; all non-zero, all the same length."""

    names: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be a 2-d array, got shape {vectors.shape}")
        if len(self.names) != vectors.shape[0]:
            raise ValueError("names and vectors must align")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0.0):
            zero = self.names[int(np.argmax(norms == 0.0))]
            raise ValueError(f"embedding {zero!r} is the zero vector")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, Sequence[float]]]) -> "EmbeddingSet":
        rows = list(rows)
        if not rows:
            raise ValueError("embedding set must not be empty")
        dims = {len(vector) for _name, vector in rows}
        if len(dims) != 1:
            raise ValueError(f"embeddings must share one dimension, got {sorted(dims)}")
        return cls(
            names=tuple(name for name, _vector in rows),
            vectors=np.array([list(vector) for _name, vector in rows], dtype=float),
        )

    def __len__(self) -> int:
        return len(self.names)


def topk_avg_cosine(embeddings: EmbeddingSet, k: int) -> float:
    """Mean over entries of the mean cosine similarity to their k nearest others.

    Self-similarity is excluded. Invariant to positive per-vector scaling.
    """
    n = len(embeddings)
    check_int_at_least(k, "k", 1)
    if k >= n:
        raise ValueError(f"k must be smaller than the number of entries ({n}), got {k}")
    unit = embeddings.vectors / np.linalg.norm(embeddings.vectors, axis=1, keepdims=True)
    sims = unit @ unit.T
    np.fill_diagonal(sims, -np.inf)
    top = np.sort(sims, axis=1)[:, -k:]
    return float(np.mean(top))


# --- report rendering -----------------------------------------------------------


def report_csv_rows(report: EvalReport, categories: CategoryTable) -> list[tuple[str, str, str]]:
    """Flatten a report to (section, key, value) rows for plotting tools."""
    rows: list[tuple[str, str, str]] = [("map", "", f"{report.map:.6f}")]
    rows.extend(("ap_by_iou", f"{t:.2f}", f"{v:.6f}") for t, v in sorted(report.per_iou_ap.items()))
    rows.extend(
        ("ap_by_class", categories.by_id(c).name, f"{v:.6f}")
        for c, v in sorted(report.per_class_ap.items())
    )
    if report.cap_range is not None:
        rows.append(("cap_range", "min", f"{report.cap_range[0]:.6f}"))
        rows.append(("cap_range", "max", f"{report.cap_range[1]:.6f}"))
    rows.append(("aap", "", f"{report.aap:.6f}"))
    rows.append(("precision", "", "" if report.precision is None else f"{report.precision:.6f}"))
    rows.append(("recall", "", f"{report.recall:.6f}"))
    rows.append(("counts", "tp", str(report.counts.tp)))
    rows.append(("counts", "fp", str(report.counts.fp)))
    rows.append(("counts", "fn", str(report.counts.fn)))
    if report.per_angle is not None:
        rows.extend(("map_by_angle", f"{angle:g}", f"{v:.6f}") for angle, v in sorted(report.per_angle.items()))
    if report.per_subset is not None:
        for subset, values in sorted(report.per_subset.items()):
            rows.extend((f"subset_{subset}", key, f"{v:.6f}") for key, v in sorted(values.items()))
    return rows


def render_report(report: EvalReport, categories: CategoryTable) -> str:
    lines = []
    lines.append(f"mAP@[{min(report.per_iou_ap):.2f}:{max(report.per_iou_ap):.2f}]: {report.map:.4f}")
    lines.append(f"aAP (class-agnostic):  {report.aap:.4f}")
    if report.cap_range is not None:
        suffix = (
            f"  (excluding fallback {categories.fallback.name!r})"
            if report.config is None or report.config.get("exclude_fallback_from_cap_range", True)
            else ""
        )
        lines.append(f"cAP range: [{report.cap_range[0]:.4f}, {report.cap_range[1]:.4f}]{suffix}")
    lines.append("AP by IoU threshold:")
    for t, v in sorted(report.per_iou_ap.items()):
        lines.append(f"  {t:.2f}: {v:.4f}")
    lines.append("AP by class:")
    for c, v in sorted(report.per_class_ap.items(), key=lambda kv: categories.index_of(kv[0])):
        lines.append(f"  {categories.by_id(c).name}: {v:.4f}")
    cutoff = report.config.get("pr_score_cutoff") if report.config else None
    pr_iou = report.config.get("pr_iou") if report.config else None
    lines.append(
        "precision/recall"
        + (f" @ IoU {pr_iou:g}, score >= {cutoff:g}:" if cutoff is not None else ":")
    )
    lines.append("  precision: " + ("n/a (no predictions)" if report.precision is None else f"{report.precision:.4f}"))
    lines.append(f"  recall:    {report.recall:.4f}")
    lines.append(f"  tp/fp/fn:  {report.counts.tp}/{report.counts.fp}/{report.counts.fn}")
    if cutoff == 0.5:
        lines.append("  note: score cutoff 0.5 is the package default; pass an explicit cutoff for calibrated reporting")
    if report.per_angle is not None:
        lines.append("mAP by camera angle:")
        for angle, v in sorted(report.per_angle.items()):
            lines.append(f"  {angle:>4g} deg: {v:.4f}")
    if report.per_subset is not None:
        lines.append("mAP by subset:")
        for subset, values in sorted(report.per_subset.items()):
            parts = ", ".join(f"{key}={v:.4f}" for key, v in sorted(values.items()))
            lines.append(f"  {subset}: {parts}")
    return "".join(line + "\n" for line in lines)
