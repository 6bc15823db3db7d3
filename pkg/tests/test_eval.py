import math
import random

import numpy as np
import pytest
import scipy.stats

from weakbox import (
    Annotation,
    BoundingBox,
    COCO_IOU_THRESHOLDS,
    DatasetStore,
    Detection,
    DetectionEvaluator,
    EmbeddingSet,
    EvalError,
    IntegrityError,
    average_precision,
    match_detections,
    proportion_z_test,
    topk_avg_cosine,
)
from weakbox.evaluation import render_report, report_csv_rows

from .conftest import det, make_categories, make_image
from .instances import random_eval_instance, rows_for_oracle
from .oracles import (
    brute_force_ap,
    brute_force_mean_ap,
    normal_cdf_by_quadrature,
)


def store_from_gt_rows(gt_rows, *, n_classes=3, extra_meta=None, image_ids=()):
    image_ids = sorted({img for img, _c, _b in gt_rows} | set(extra_meta or ()) | set(image_ids))
    images = tuple(
        make_image(image_id, 200, 200, **(extra_meta or {}).get(image_id, {})) for image_id in image_ids
    )
    annotations = tuple(
        Annotation(id=i + 1, image_id=img, category_id=c, box=b)
        for i, (img, c, b) in enumerate(gt_rows)
    )
    return DatasetStore(images=images, categories=make_categories(n_classes), annotations=annotations)


class TestMatchDetections:
    def test_perfect_predictions_all_match(self):
        gts = [BoundingBox(0, 0, 10, 10), BoundingBox(50, 50, 10, 10)]
        preds = [Detection(g, 0.9) for g in gts]
        assert match_detections(preds, gts, 0.5) == [0, 1]

    def test_one_to_one_higher_score_wins(self):
        gt = [BoundingBox(0, 0, 10, 10)]
        preds = [Detection(BoundingBox(0, 0, 10, 10), 0.8), Detection(BoundingBox(1, 0, 10, 10), 0.9)]
        assert match_detections(preds, gt, 0.5) == [None, 0]

    def test_low_iou_unmatched(self):
        gt = [BoundingBox(0, 0, 10, 10)]
        preds = [Detection(BoundingBox(4, 0, 10, 10), 0.9)]  # IoU 6/14 = 0.43
        assert match_detections(preds, gt, 0.75) == [None]

    def test_label_restriction(self):
        gt = [BoundingBox(0, 0, 10, 10)]
        preds = [Detection(BoundingBox(0, 0, 10, 10), 0.9, label=2)]
        assert match_detections(preds, gt, 0.5, gt_labels=[1]) == [None]
        assert match_detections(preds, gt, 0.5, gt_labels=[2]) == [0]


class TestAveragePrecision:
    def test_perfect(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        pred_rows = [("a", Detection(BoundingBox(0, 0, 10, 10), 0.9, label=1))]
        assert average_precision(pred_rows, gt_rows, 0.5) == 1.0

    def test_no_predictions(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        assert average_precision([], gt_rows, 0.5) == 0.0

    def test_no_ground_truth_is_undefined(self):
        assert average_precision([("a", Detection(BoundingBox(0, 0, 1, 1), 0.5))], [], 0.5) is None

    def test_two_gt_one_tp_one_fp_spot_value(self):
        # with one hit at recall 0.5 and one miss, the interpolated curve is
        # 1.0 on the 51 grid points up to recall 0.50 and 0 beyond
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10)), ("a", 1, BoundingBox(50, 50, 10, 10))]
        pred_rows = [
            ("a", Detection(BoundingBox(0, 0, 10, 10), 0.9, label=1)),
            ("a", Detection(BoundingBox(80, 0, 10, 10), 0.8, label=1)),
        ]
        oracle_preds, oracle_gts = rows_for_oracle(pred_rows, gt_rows)
        oracle = brute_force_ap(
            [(img, s, box) for img, s, _l, box in oracle_preds],
            [(img, box) for img, _l, box in oracle_gts],
            0.75,
        )
        assert oracle == pytest.approx(51 / 101, abs=1e-15)
        assert average_precision(pred_rows, gt_rows, 0.75) == pytest.approx(51 / 101, abs=1e-12)

    def test_matches_oracle_on_random_instances(self):
        rng = random.Random(424242)
        for _ in range(100):
            pred_rows, gt_rows, _image_ids = random_eval_instance(rng)
            threshold = rng.choice(COCO_IOU_THRESHOLDS)
            label = rng.choice((1, 2, 3))
            preds_c = [(img, d) for img, d in pred_rows if d.label == label]
            gts_c = [row for row in gt_rows if row[1] == label]
            if not gts_c:
                continue
            mine = average_precision(preds_c, gts_c, threshold)
            reference = brute_force_ap(
                [(img, d.score, d.box.as_xywh()) for img, d in preds_c],
                [(img, box.as_xywh()) for img, _c, box in gts_c],
                threshold,
            )
            assert mine == pytest.approx(reference, abs=1e-9)


class TestMapCoco:
    def test_identical_predictions_score_one(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10)), ("b", 2, BoundingBox(5, 5, 20, 20))]
        gts = store_from_gt_rows(gt_rows)
        report = DetectionEvaluator().evaluate(gts, gts)
        assert report.map == 1.0
        assert report.aap == 1.0
        assert all(v == 1.0 for v in report.per_iou_ap.values())

    def test_shuffled_labels_keep_aap_perfect(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10)), ("a", 2, BoundingBox(50, 50, 20, 20))]
        gts = store_from_gt_rows(gt_rows)
        pred_rows = [
            ("a", Detection(BoundingBox(0, 0, 10, 10), 0.9, label=2)),
            ("a", Detection(BoundingBox(50, 50, 20, 20), 0.8, label=1)),
        ]
        report = DetectionEvaluator().evaluate(pred_rows, gts)
        assert report.aap == 1.0
        assert report.map < 1.0

    def test_matches_oracle_on_random_instances(self):
        rng = random.Random(31337)
        evaluator = DetectionEvaluator()
        for _ in range(60):
            pred_rows, gt_rows, image_ids = random_eval_instance(rng)
            gts = store_from_gt_rows(gt_rows, image_ids=image_ids)
            report = evaluator.evaluate(pred_rows, gts)
            oracle_preds, oracle_gts = rows_for_oracle(pred_rows, gt_rows)
            reference = brute_force_mean_ap(oracle_preds, oracle_gts, list(COCO_IOU_THRESHOLDS))
            assert report.map == pytest.approx(reference, abs=1e-9)

    def test_empty_ground_truth_is_an_error(self):
        gts = DatasetStore(images=(make_image("a"),), categories=make_categories(2), annotations=())
        with pytest.raises(EvalError):
            DetectionEvaluator().evaluate([], gts)

    def test_unknown_pred_image_rejected(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        gts = store_from_gt_rows(gt_rows)
        with pytest.raises(IntegrityError):
            DetectionEvaluator().evaluate([("ghost", Detection(BoundingBox(0, 0, 1, 1), 0.5, label=1))], gts)

    def test_cap_range_excludes_fallback(self):
        # class 1 is the fallback; make its AP 0 and others 1
        gt_rows = [
            ("a", 1, BoundingBox(0, 0, 10, 10)),
            ("a", 2, BoundingBox(30, 30, 10, 10)),
            ("a", 3, BoundingBox(60, 60, 10, 10)),
        ]
        gts = store_from_gt_rows(gt_rows)
        pred_rows = [
            ("a", Detection(BoundingBox(30, 30, 10, 10), 0.9, label=2)),
            ("a", Detection(BoundingBox(60, 60, 10, 10), 0.9, label=3)),
        ]
        excl = DetectionEvaluator().evaluate(pred_rows, gts)
        assert excl.cap_range == (1.0, 1.0)
        incl = DetectionEvaluator(exclude_fallback_from_cap_range=False).evaluate(pred_rows, gts)
        assert incl.cap_range == (0.0, 1.0)

    def test_adding_unmatched_tp_never_decreases_map(self):
        rng = random.Random(777)
        evaluator = DetectionEvaluator()
        checked = 0
        while checked < 25:
            pred_rows, gt_rows, image_ids = random_eval_instance(rng)
            gts = store_from_gt_rows(gt_rows, image_ids=image_ids)
            before = evaluator.evaluate(pred_rows, gts)
            if before.counts.fn == 0:
                continue
            # find an unmatched gt at the strictest threshold: add a perfect
            # copy with a score above everything
            img, category, box = rng.choice(gt_rows)
            top = max((d.score for _i, d in pred_rows), default=0.5)
            boosted = pred_rows + [(img, Detection(box, min(1.0, top + 0.05), label=category))]
            after = evaluator.evaluate(boosted, gts)
            assert after.map >= before.map - 1e-12
            checked += 1

    def test_trailing_fp_never_increases_map(self):
        rng = random.Random(778)
        evaluator = DetectionEvaluator()
        for _ in range(25):
            pred_rows, gt_rows, image_ids = random_eval_instance(rng)
            gts = store_from_gt_rows(gt_rows, image_ids=image_ids)
            before = evaluator.evaluate(pred_rows, gts)
            low = min((d.score for _i, d in pred_rows), default=0.5)
            junk = ("img0", Detection(BoundingBox(150, 150, 5, 5), max(0.01, low - 0.009), label=1))
            after = evaluator.evaluate(pred_rows + [junk], gts)
            assert after.map <= before.map + 1e-12

    def test_nms_preprocessing(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        gts = store_from_gt_rows(gt_rows)
        pred_rows = [
            ("a", Detection(BoundingBox(0, 0, 10, 10), 0.9, label=1)),
            ("a", Detection(BoundingBox(0, 0, 10, 10), 0.8, label=2)),  # cross-class duplicate
        ]
        plain = DetectionEvaluator().evaluate(pred_rows, gts)
        suppressed = DetectionEvaluator(nms_iou=0.5).evaluate(pred_rows, gts)
        # without NMS the class-2 duplicate is a false positive at the P/R point
        assert plain.counts.fp == 1
        assert suppressed.counts.fp == 0
        per_class = DetectionEvaluator(nms_iou=0.5, nms_class_agnostic=False).evaluate(pred_rows, gts)
        assert per_class.counts.fp == 1


class TestPrecisionRecall:
    def test_all_perfect(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        gts = store_from_gt_rows(gt_rows)
        precision, recall, counts = DetectionEvaluator().precision_recall(gts, gts)
        assert (precision, recall) == (1.0, 1.0)
        assert counts.tp == 1 and counts.fp == 0 and counts.fn == 0

    def test_eleven_fp_five_fn_at_production_scale(self):
        # 2220 ground-truth boxes; predictions hit all but 5 and add 11 junk
        # boxes: precision 2215/2226, recall 2215/2220
        images = 100
        per_image = 2220 // images  # 22, remainder spread below
        gt_rows = []
        grid = [(x, y) for y in range(0, 1000, 50) for x in range(0, 1000, 50)]
        count = 0
        for i in range(images):
            image_id = f"im{i:03d}"
            quota = per_image + (1 if i < 2220 - per_image * images else 0)
            for slot in range(quota):
                x, y = grid[slot]
                gt_rows.append((image_id, 1 + count % 3, BoundingBox(float(x), float(y), 40.0, 40.0)))
                count += 1
        assert len(gt_rows) == 2220
        pred_rows = [
            (img, Detection(box, 0.9, label=category)) for img, category, box in gt_rows[5:]
        ]
        for j in range(11):
            pred_rows.append((f"im{j:03d}", Detection(BoundingBox(920.0 + j % 2, 920.0, 30.0, 30.0), 0.9, label=1)))
        images_meta = {f"im{i:03d}": {} for i in range(images)}
        store = DatasetStore(
            images=tuple(make_image(image_id, 1000, 1000) for image_id in sorted(images_meta)),
            categories=make_categories(3),
            annotations=tuple(
                Annotation(id=i + 1, image_id=img, category_id=c, box=b)
                for i, (img, c, b) in enumerate(gt_rows)
            ),
        )
        precision, recall, counts = DetectionEvaluator().precision_recall(pred_rows, store)
        assert counts == type(counts)(tp=2215, fp=11, fn=5)
        assert precision == pytest.approx(0.995, abs=5e-4)
        assert recall == pytest.approx(0.998, abs=5e-4)

    def test_no_survivors_gives_undefined_precision(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        gts = store_from_gt_rows(gt_rows)
        pred_rows = [("a", Detection(BoundingBox(0, 0, 10, 10), 0.2, label=1))]
        precision, recall, counts = DetectionEvaluator(pr_score_cutoff=0.5).precision_recall(pred_rows, gts)
        assert precision is None
        assert recall == 0.0
        assert counts.tp == 0 and counts.fn == 1

    def test_score_cutoff_keeps_boundary(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        gts = store_from_gt_rows(gt_rows)
        pred_rows = [("a", Detection(BoundingBox(0, 0, 10, 10), 0.5, label=1))]
        precision, recall, _counts = DetectionEvaluator(pr_score_cutoff=0.5).precision_recall(pred_rows, gts)
        assert (precision, recall) == (1.0, 1.0)

    def test_tp_plus_fn_is_gt_count(self):
        rng = random.Random(901)
        evaluator = DetectionEvaluator()
        for _ in range(20):
            pred_rows, gt_rows, image_ids = random_eval_instance(rng)
            gts = store_from_gt_rows(gt_rows, image_ids=image_ids)
            _p, _r, counts = evaluator.precision_recall(pred_rows, gts)
            assert counts.tp + counts.fn == len(gt_rows)

    def test_class_agnostic_mode(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        gts = store_from_gt_rows(gt_rows)
        pred_rows = [("a", Detection(BoundingBox(0, 0, 10, 10), 0.9, label=2))]
        aware = DetectionEvaluator().precision_recall(pred_rows, gts)
        agnostic = DetectionEvaluator().precision_recall(pred_rows, gts, class_agnostic=True)
        assert aware[2].tp == 0
        assert agnostic[2].tp == 1


class TestProportionZTest:
    def test_identical_proportions_z_zero(self):
        result = proportion_z_test(50, 100, 50, 100)
        assert result.z == 0.0
        assert not result.significant

    def test_ninety_vs_eighty(self):
        result = proportion_z_test(90, 100, 80, 100)
        # pooled formula by hand: (0.9-0.8)/sqrt(0.85*0.15*(2/100))
        expected_z = 0.1 / math.sqrt(0.85 * 0.15 * 0.02)
        assert result.z == pytest.approx(expected_z, abs=1e-12)
        assert result.z == pytest.approx(1.980, abs=1e-3)
        # p-value against an integration-based normal CDF
        expected_p = 2.0 * (1.0 - normal_cdf_by_quadrature(result.z))
        assert result.p_value == pytest.approx(expected_p, abs=1e-9)
        assert result.p_value == pytest.approx(0.0477, abs=1e-4)
        assert result.significant

    def test_maximal_separation(self):
        result = proportion_z_test(100, 100, 0, 100)
        assert result.z > 10
        assert result.significant

    def test_pooled_degenerate_rates(self):
        assert proportion_z_test(0, 50, 0, 70).z == 0.0
        assert proportion_z_test(50, 50, 70, 70).z == 0.0

    def test_antisymmetry_on_random_cases(self):
        rng = random.Random(5150)
        for _ in range(100):
            n_a = rng.randint(1, 500)
            n_b = rng.randint(1, 500)
            s_a = rng.randint(0, n_a)
            s_b = rng.randint(0, n_b)
            forward = proportion_z_test(s_a, n_a, s_b, n_b)
            backward = proportion_z_test(s_b, n_b, s_a, n_a)
            assert forward.z == -backward.z
            assert forward.p_value == backward.p_value
            assert forward.significant == backward.significant

    def test_agrees_with_scipy_normal(self):
        rng = random.Random(5151)
        for _ in range(25):
            n = rng.randint(2, 300)
            result = proportion_z_test(rng.randint(0, n), n, rng.randint(0, n), n)
            expected = 2.0 * (1.0 - scipy.stats.norm.cdf(abs(result.z)))
            assert result.p_value == pytest.approx(expected, abs=1e-12)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            proportion_z_test(1, 0, 1, 10)
        with pytest.raises(ValueError):
            proportion_z_test(11, 10, 1, 10)
        with pytest.raises(ValueError):
            proportion_z_test(-1, 10, 1, 10)


class TestTopkAvgCosine:
    def test_identical_vectors(self):
        rows = [(f"n{i}", (0.6, 0.8)) for i in range(6)]
        embeddings = EmbeddingSet.from_rows(rows)
        for k in (1, 3, 5):
            assert topk_avg_cosine(embeddings, k) == pytest.approx(1.0, abs=1e-12)

    def test_orthonormal_basis(self):
        embeddings = EmbeddingSet(names=("x", "y", "z"), vectors=np.eye(3))
        assert topk_avg_cosine(embeddings, 1) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_three_vectors(self):
        # vectors at 0, 60 and 90 degrees in the plane
        embeddings = EmbeddingSet(
            names=("a", "b", "c"),
            vectors=np.array([[1.0, 0.0], [0.5, math.sqrt(3) / 2], [0.0, 1.0]]),
        )
        # nearest-other cosines: a->b cos60=.5, b->a or b->c cos30=.866, c->b .866
        expected = (0.5 + math.cos(math.pi / 6) + math.cos(math.pi / 6)) / 3
        assert topk_avg_cosine(embeddings, 1) == pytest.approx(expected, abs=1e-12)

    def test_scale_invariance(self, rng):
        vectors = np.array([[rng.uniform(-1, 1) for _ in range(8)] for _ in range(10)])
        vectors[np.all(vectors == 0, axis=1)] = 1.0
        base = EmbeddingSet(names=tuple(f"n{i}" for i in range(10)), vectors=vectors)
        scaled = EmbeddingSet(
            names=base.names,
            vectors=vectors * np.array([[rng.uniform(0.1, 9.0)] for _ in range(10)]),
        )
        assert topk_avg_cosine(scaled, 4) == pytest.approx(topk_avg_cosine(base, 4), abs=1e-9)

    def test_k_bounds(self):
        embeddings = EmbeddingSet(names=("a", "b"), vectors=np.eye(2))
        with pytest.raises(ValueError):
            topk_avg_cosine(embeddings, 2)
        with pytest.raises(ValueError):
            topk_avg_cosine(embeddings, 0)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            EmbeddingSet(names=("a", "b"), vectors=np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ValueError, match="dimension"):
            EmbeddingSet.from_rows([("a", (1.0, 0.0)), ("b", (1.0,))])


class TestAngleReport:
    @staticmethod
    def angle_fixture(hits_by_angle):
        gt_rows = []
        extra_meta = {}
        pred_rows = []
        for angle, hits in hits_by_angle.items():
            for i in range(10):
                image_id = f"a{angle:02d}_{i}"
                extra_meta[image_id] = {"camera_angle_deg": float(angle)}
                gt_rows.append((image_id, 1, BoundingBox(10, 10, 40, 40)))
                if i < hits:
                    pred_rows.append((image_id, Detection(BoundingBox(10, 10, 40, 40), 0.9, label=1)))
        gts = store_from_gt_rows(gt_rows, extra_meta=extra_meta)
        return pred_rows, gts

    def test_perfect_predictions_everywhere(self):
        pred_rows, gts = self.angle_fixture({a: 10 for a in range(0, 90, 10)})
        report = DetectionEvaluator().angle_report(pred_rows, gts)
        assert sorted(report) == [float(a) for a in range(0, 90, 10)]
        assert all(v == 1.0 for v in report.values())

    def test_nine_buckets(self):
        pred_rows, gts = self.angle_fixture({a: 10 for a in range(0, 90, 10)})
        assert len(DetectionEvaluator().angle_report(pred_rows, gts)) == 9

    def test_degradation_tail_is_monotone(self):
        hits = {0: 10, 10: 10, 20: 10, 30: 10, 40: 10, 50: 8, 60: 6, 70: 4, 80: 2}
        pred_rows, gts = self.angle_fixture(hits)
        report = DetectionEvaluator().angle_report(pred_rows, gts)
        tail = [report[float(a)] for a in (40, 50, 60, 70, 80)]
        assert all(a > b for a, b in zip(tail, tail[1:]))

    def test_missing_angle_metadata_rejected(self):
        gt_rows = [("plain", 1, BoundingBox(0, 0, 10, 10))]
        gts = store_from_gt_rows(gt_rows)
        with pytest.raises(IntegrityError, match="camera_angle"):
            DetectionEvaluator().angle_report([], gts)


class TestSubsetReports:
    def test_first_frame_versus_full(self):
        gt_rows = []
        extra_meta = {}
        pred_rows = []
        for v in range(3):
            for f in range(4):
                image_id = f"v{v}/frame_{f:06d}"
                extra_meta[image_id] = {"video_id": f"v{v}", "frame_index": f}
                gt_rows.append((image_id, 1, BoundingBox(10, 10, 40, 40)))
                if f == 0:
                    pred_rows.append((image_id, Detection(BoundingBox(10, 10, 40, 40), 0.9, label=1)))
                else:
                    pred_rows.append((image_id, Detection(BoundingBox(22, 10, 40, 40), 0.9, label=1)))
        gts = store_from_gt_rows(gt_rows, extra_meta=extra_meta)
        subsets = DetectionEvaluator().subset_reports(pred_rows, gts)
        assert set(subsets) == {"full", "first_frames"}
        assert subsets["first_frames"]["map"] == 1.0
        assert subsets["full"]["map"] < 1.0
        assert subsets["first_frames"]["aap"] == 1.0

    def test_requires_frame_metadata(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        gts = store_from_gt_rows(gt_rows)
        with pytest.raises(IntegrityError, match="frame_index"):
            DetectionEvaluator().subset_reports([], gts)


class TestCompare:
    def test_recall_gap_detected(self):
        gt_rows = [(f"i{j}", 1, BoundingBox(10, 10, 40, 40)) for j in range(100)]
        gts = store_from_gt_rows(gt_rows)
        perfect = [(f"i{j}", Detection(BoundingBox(10, 10, 40, 40), 0.9, label=1)) for j in range(100)]
        weak = perfect[:60]
        results = DetectionEvaluator().compare(perfect, weak, gts)
        assert results["recall"].significant
        assert results["recall"].z > 0


class TestReportRendering:
    def test_text_and_csv(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10)), ("a", 2, BoundingBox(50, 50, 20, 20))]
        gts = store_from_gt_rows(gt_rows)
        report = DetectionEvaluator().evaluate(gts, gts)
        text = render_report(report, gts.categories)
        assert "mAP@[0.50:0.95]: 1.0000" in text
        assert "aAP" in text
        assert "score cutoff 0.5 is the package default" in text
        rows = report_csv_rows(report, gts.categories)
        sections = {section for section, _k, _v in rows}
        assert {"map", "aap", "ap_by_iou", "ap_by_class", "precision", "recall", "counts"} <= sections

    def test_all_metrics_in_unit_interval(self):
        rng = random.Random(11)
        evaluator = DetectionEvaluator()
        for _ in range(20):
            pred_rows, gt_rows, image_ids = random_eval_instance(rng)
            gts = store_from_gt_rows(gt_rows, image_ids=image_ids)
            report = evaluator.evaluate(pred_rows, gts)
            values = [report.map, report.aap, report.recall, *report.per_iou_ap.values(), *report.per_class_ap.values()]
            if report.precision is not None:
                values.append(report.precision)
            if report.cap_range is not None:
                values.extend(report.cap_range)
            assert all(0.0 <= v <= 1.0 for v in values)


class TestOracleFacets:
    def test_per_class_per_iou_and_aap_match_oracle(self):
        rng = random.Random(90210)
        evaluator = DetectionEvaluator()
        for _ in range(40):
            pred_rows, gt_rows, image_ids = random_eval_instance(rng)
            gts = store_from_gt_rows(gt_rows, image_ids=image_ids)
            report = evaluator.evaluate(pred_rows, gts)
            thresholds = list(COCO_IOU_THRESHOLDS)
            classes = sorted({c for _i, c, _b in gt_rows})
            # per-class AP: mean over thresholds of the brute-force AP
            for c in classes:
                preds_c = [(img, d.score, d.box.as_xywh()) for img, d in pred_rows if d.label == c]
                gts_c = [(img, box.as_xywh()) for img, lb, box in gt_rows if lb == c]
                reference = sum(brute_force_ap(preds_c, gts_c, t) for t in thresholds) / len(thresholds)
                assert report.per_class_ap[c] == pytest.approx(reference, abs=1e-9)
            # per-threshold AP: mean over classes
            for t in thresholds:
                per_class_at_t = []
                for c in classes:
                    preds_c = [(img, d.score, d.box.as_xywh()) for img, d in pred_rows if d.label == c]
                    gts_c = [(img, box.as_xywh()) for img, lb, box in gt_rows if lb == c]
                    per_class_at_t.append(brute_force_ap(preds_c, gts_c, t))
                assert report.per_iou_ap[t] == pytest.approx(
                    sum(per_class_at_t) / len(per_class_at_t), abs=1e-9
                )
            # class-agnostic AP: labels erased on both sides
            erased_preds = [(img, d.score, d.box.as_xywh()) for img, d in pred_rows]
            erased_gts = [(img, box.as_xywh()) for img, _lb, box in gt_rows]
            reference_aap = sum(brute_force_ap(erased_preds, erased_gts, t) for t in thresholds) / len(thresholds)
            assert report.aap == pytest.approx(reference_aap, abs=1e-9)


class TestPredStoreSemantics:
    def test_weak_and_pseudo_predictions_ignore_stored_scores(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10))]
        gts = store_from_gt_rows(gt_rows)
        weak_store = DatasetStore(
            images=gts.images,
            categories=gts.categories,
            annotations=(
                Annotation(id=1, image_id="a", category_id=1, box=BoundingBox(0, 0, 10, 10),
                           score=0.2, provenance="weak"),
            ),
        )
        # score 0.2 is below the 0.5 cutoff, but weak annotations rank at 1.0
        precision, recall, counts = DetectionEvaluator().precision_recall(weak_store, gts)
        assert (precision, recall) == (1.0, 1.0)
        predicted_store = DatasetStore(
            images=gts.images,
            categories=gts.categories,
            annotations=(
                Annotation(id=1, image_id="a", category_id=1, box=BoundingBox(0, 0, 10, 10),
                           score=0.2, provenance="predicted"),
            ),
        )
        precision, recall, _counts = DetectionEvaluator().precision_recall(predicted_store, gts)
        assert precision is None and recall == 0.0

    def test_prediction_store_with_permuted_category_ids(self):
        gt_rows = [("a", 1, BoundingBox(0, 0, 10, 10)), ("a", 2, BoundingBox(50, 50, 10, 10))]
        gts = store_from_gt_rows(gt_rows)  # ids 1..3 named class_00..class_02
        # prediction store names the same classes but assigns different ids
        from weakbox import Category, CategoryTable

        permuted = CategoryTable((
            Category(id=7, name="class_01", is_fallback=False),
            Category(id=8, name="class_00", is_fallback=True),
            Category(id=9, name="class_02", is_fallback=False),
        ))
        pred_store = DatasetStore(
            images=gts.images,
            categories=permuted,
            annotations=(
                Annotation(id=1, image_id="a", category_id=8, box=BoundingBox(0, 0, 10, 10),
                           score=0.9, provenance="predicted"),
                Annotation(id=2, image_id="a", category_id=7, box=BoundingBox(50, 50, 10, 10),
                           score=0.9, provenance="predicted"),
            ),
        )
        report = DetectionEvaluator().evaluate(pred_store, gts)
        assert report.map == 1.0


class TestSklearnInterop:
    def test_estimators_clone_and_round_trip_params(self):
        from sklearn.base import clone

        from weakbox import FilterPipeline, GreedyIouTracker, WeakLabeler

        def value_params(estimator):
            # nested estimators clone to fresh objects; compare leaf values
            return {
                key: value
                for key, value in estimator.get_params(deep=True).items()
                if not hasattr(value, "get_params")
            }

        for estimator in (
            FilterPipeline(duplicate_iou=0.6),
            GreedyIouTracker(match_min_iou=0.4),
            DetectionEvaluator(pr_iou=0.7),
            WeakLabeler(pipeline=FilterPipeline(containment_capture=0.9)),
        ):
            twin = clone(estimator)
            assert type(twin) is type(estimator)
            assert value_params(twin) == value_params(estimator)

    def test_nested_params_addressable(self):
        from weakbox import FilterPipeline, WeakLabeler

        labeler = WeakLabeler(pipeline=FilterPipeline())
        params = labeler.get_params(deep=True)
        assert params["pipeline__duplicate_iou"] == 0.75
        labeler.set_params(pipeline__duplicate_iou=0.5)
        assert labeler.pipeline.duplicate_iou == 0.5
