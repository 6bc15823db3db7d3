"""Command-line surface: validate, filter, weaklabel, propagate, split, eval.

Every command validates its inputs fully before writing any output file, so
a failing run leaves no partial artifacts. Outputs embed the effective
configuration (as ``#`` header lines or report fields) and contain nothing
time- or host-dependent: rerunning a command with the same inputs and flags
produces byte-identical files.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .boxes import BoxError, Detection, clip_detections
from .datasets import (
    DatasetError,
    DatasetStore,
    IntegrityError,
    class_histogram,
    dumps_canonical,
    load_dataset,
    store_from_jsonable,
    store_to_jsonable,
)
from .evaluation import (
    COCO_IOU_THRESHOLDS,
    DetectionEvaluator,
    EvalError,
    render_report,
    report_csv_rows,
)
from .filters import FilterPipeline
from .propagate import (
    FirstFrameQuery,
    GreedyIouTracker,
    annotation_cost_reduction,
    ingest_track_stream,
    select_queries,
)
from .splits import split_grouped
from .streams import (
    config_header,
    detection_to_jsonable,
    group_detections,
    read_detections,
    read_embedding_rows,
    read_query_rows,
    read_tracks,
    write_tracks,
)
from .weaklabel import build_weak_dataset, validate_single_class

_FRAME_ID = re.compile(r"^(?P<video>.+)/frame_(?P<index>\d+)$")


def _default_jobs() -> int:
    raw = os.environ.get("WEAKBOX_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _filter_options(fn):
    fn = click.option(
        "--background-area-fraction",
        type=float,
        default=0.90,
        show_default=True,
        help="Discard boxes covering at least this fraction of the image.",
    )(fn)
    fn = click.option(
        "--duplicate-iou",
        type=float,
        default=0.75,
        show_default=True,
        help="Discard lower-confidence boxes overlapping a kept box above this IoU.",
    )(fn)
    fn = click.option(
        "--containment-capture",
        type=float,
        default=0.95,
        show_default=True,
        help="Capture rate above which one box counts as contained in another.",
    )(fn)
    fn = click.option(
        "--crowd-min-contained",
        type=int,
        default=3,
        show_default=True,
        help="Discard boxes containing at least this many other boxes.",
    )(fn)
    return fn


def _pipeline_from(options: dict) -> FilterPipeline:
    return FilterPipeline(
        background_area_fraction=options["background_area_fraction"],
        duplicate_iou=options["duplicate_iou"],
        containment_capture=options["containment_capture"],
        crowd_min_contained=options["crowd_min_contained"],
    )


@click.group()
def cli() -> None:
    """Annotation tooling for detection datasets built with limited supervision."""


@cli.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--kind",
    type=click.Choice(["dataset", "detections", "tracks", "queries", "embeddings"]),
    default="dataset",
    show_default=True,
)
def validate(path: str, kind: str) -> None:
    """Check a file against its schema; exits non-zero on any violation."""
    if kind == "dataset":
        store = load_dataset(path)
        count = len(store.annotations)
    elif kind == "detections":
        count = len(read_detections(path))
    elif kind == "tracks":
        count = len(read_tracks(path))
    elif kind == "queries":
        count = len(read_query_rows(path))
    else:
        from .evaluation import EmbeddingSet

        count = len(EmbeddingSet.from_rows(read_embedding_rows(path)))
    click.echo(f"OK: {path} is a valid {kind} file ({count} records, 0 warnings)")


@cli.command()
@click.argument("detections_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Dataset file supplying image dimensions.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), help="Where to write the removal trace (JSONL).")
@click.option("--jobs", type=int, default=None, help="Worker threads; defaults to $WEAKBOX_JOBS or 1.")
@_filter_options
def filter(detections_path, dataset_path, out_path, trace_path, jobs, **thresholds) -> None:
    """Run the four-stage cleanup over a raw detection stream."""
    store = load_dataset(dataset_path)
    rows = read_detections(detections_path)
    grouped = group_detections(rows)
    unknown = sorted(set(grouped) - {img.id for img in store.images})
    if unknown:
        raise IntegrityError(f"detections reference unknown image ids: {unknown}")
    pipeline = _pipeline_from(thresholds)

    def run_image(image_id: str):
        image = store.image_by_id(image_id)
        dets = clip_detections(grouped[image_id], image.dims)
        return image_id, pipeline.apply(dets, image.dims)

    image_ids = sorted(grouped)
    n_jobs = jobs if jobs is not None else _default_jobs()
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            traces = dict(pool.map(run_image, image_ids))
    else:
        traces = dict(map(run_image, image_ids))

    header = config_header(pipeline.get_params(), tool="weakbox filter")
    out_lines = [header]
    trace_lines = [header]
    kept = removed = 0
    for image_id in image_ids:
        trace = traces[image_id]
        for det in trace.kept:
            out_lines.append(json.dumps(detection_to_jsonable(image_id, det), sort_keys=True, ensure_ascii=False))
            kept += 1
        for removal in trace.removed:
            record = detection_to_jsonable(image_id, removal.detection)
            record["stage"] = removal.stage
            trace_lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False))
            removed += 1
    _write_text(out_path, "".join(line + "\n" for line in out_lines))
    if trace_path:
        _write_text(trace_path, "".join(line + "\n" for line in trace_lines))
    click.echo(f"kept {kept} detections, removed {removed} (trace: {trace_path or 'not written'})")


@cli.command()
@click.argument("dataset_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("detections_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--split-tag", default=None, help="split_tag to stamp on the output dataset.")
@_filter_options
def weaklabel(dataset_path, detections_path, out_path, split_tag, **thresholds) -> None:
    """Build a weakly labeled dataset from image-level labels plus raw boxes."""
    store = load_dataset(dataset_path)
    rows = read_detections(detections_path)
    pipeline = _pipeline_from(thresholds)
    import warnings as _warnings

    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        built = build_weak_dataset(
            store.images, store.categories, rows, pipeline, split_tag=split_tag
        )
    violations = validate_single_class(built)
    if violations:  # pragma: no cover - construction guarantees purity
        raise IntegrityError("; ".join(violations))
    _write_text(out_path, dumps_canonical(store_to_jsonable(built)))
    for warning in caught:
        click.echo(f"warning: {warning.message}", err=True)
    click.echo(
        f"wrote {out_path}: {len(built.annotations)} weak annotations over "
        f"{len(built.images)} images; single-class purity check passed"
    )


@cli.command()
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tracks", "tracks_path", type=click.Path(exists=True, dir_okay=False), help="Track stream to ingest.")
@click.option("--oracle", "candidates_path", type=click.Path(exists=True, dir_okay=False), help="Per-frame candidate boxes; runs the built-in greedy-IoU tracker instead of ingesting.")
@click.option("--categories", "categories_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Dataset file whose category table the output adopts.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--tracks-out", "tracks_out_path", type=click.Path(dir_okay=False), help="Oracle mode: also write the generated track stream here.")
@click.option("--frame-width", type=int, default=None)
@click.option("--frame-height", type=int, default=None)
@click.option("--query-score-cutoff", type=float, default=0.7, show_default=True)
@click.option("--oracle-min-iou", type=float, default=0.3, show_default=True)
@click.option("--split-tag", default=None)
def propagate(
    queries_path,
    tracks_path,
    candidates_path,
    categories_path,
    out_path,
    tracks_out_path,
    frame_width,
    frame_height,
    query_score_cutoff,
    oracle_min_iou,
    split_tag,
) -> None:
    """Turn first-frame queries plus tracked boxes into a pseudo-labeled dataset."""
    if (tracks_path is None) == (candidates_path is None):
        raise click.UsageError("pass exactly one of --tracks (ingest) or --oracle (built-in tracker)")
    if frame_width is None or frame_height is None:
        raise click.UsageError("--frame-width and --frame-height are required")
    from .boxes import ImageDims

    dims = ImageDims(frame_width, frame_height)
    categories = load_dataset(categories_path).categories
    queries, dropped = _load_queries(queries_path, categories, query_score_cutoff)
    if dropped:
        click.echo(
            f"dropped {dropped} predicted queries below the {query_score_cutoff:g} confidence cutoff",
            err=True,
        )

    tracker = None
    if candidates_path is not None:
        by_video_frame = _load_frame_candidates(candidates_path)
        tracker = GreedyIouTracker(match_min_iou=oracle_min_iou)
        records = []
        for video_id in sorted({q.video_id for q in queries}):
            video_queries = [q for q in queries if q.video_id == video_id]
            frames = by_video_frame.get(video_id, {})
            records.extend(tracker.predict(video_queries, frames))
    else:
        records = read_tracks(tracks_path)

    store = ingest_track_stream(
        records, queries, categories=categories, frame_dims=dims, split_tag=split_tag
    )
    # all validation is done; only now touch the filesystem
    if tracker is not None and tracks_out_path:
        header = config_header(tracker.get_params(), tool="weakbox propagate --oracle")
        write_tracks(tracks_out_path, records, header=header)
    _write_text(out_path, dumps_canonical(store_to_jsonable(store)))
    n_videos = len({q.video_id for q in queries})
    n_frames = len(store.images)
    if n_frames:
        reduction = annotation_cost_reduction(n_videos, n_frames)
        click.echo(
            f"wrote {out_path}: {len(store.annotations)} pseudo annotations over "
            f"{n_frames} frames in {n_videos} videos"
        )
        click.echo(
            f"manual annotation cost: {n_videos} first frames for {n_frames} frames "
            f"-> reduced by {reduction:.2%}"
        )
    else:
        click.echo(f"wrote {out_path}: empty dataset (no track records)")


def _load_queries(path, categories, score_cutoff) -> tuple[list[FirstFrameQuery], int]:
    """Returns the queries plus the count of predicted queries lost to the cutoff."""
    rows = read_query_rows(path)
    queries: list[FirstFrameQuery] = []
    dropped = 0
    by_video: dict[str, list[dict]] = {}
    for row in rows:
        by_video.setdefault(row["video_id"], []).append(row)
    for video_id in sorted(by_video):
        video_rows = by_video[video_id]
        explicit = all(row["instance_id"] is not None for row in video_rows)
        origins = {row["origin"] for row in video_rows}
        if len(origins) != 1:
            raise IntegrityError(f"video {video_id!r}: queries mix origins {sorted(origins)}")
        origin = origins.pop()
        labels = [row["label"] for row in video_rows]
        if any(label is None for label in labels):
            raise IntegrityError(f"video {video_id!r}: every query needs a class label")
        resolved = [categories.resolve(label) for label in labels]
        if explicit:
            for row, label in zip(video_rows, resolved):
                queries.append(
                    FirstFrameQuery(
                        video_id=video_id,
                        instance_id=row["instance_id"],
                        box=row["box"],
                        label=label,
                        score=row["score"],
                        origin=origin,
                    )
                )
        else:
            dets = [
                Detection(row["box"], row["score"], label=label)
                for row, label in zip(video_rows, resolved)
            ]
            selected = select_queries(video_id, dets, origin, score_cutoff=score_cutoff)
            dropped += len(dets) - len(selected)
            queries.extend(selected)
    return queries, dropped


def _load_frame_candidates(path) -> dict[str, dict[int, list]]:
    """Candidates use the detection stream format with frame image ids."""
    out: dict[str, dict[int, list]] = {}
    for image_id, det in read_detections(path):
        match = _FRAME_ID.match(image_id)
        if not match:
            raise IntegrityError(
                f"candidate image id {image_id!r} is not of the form '<video>/frame_<n>'"
            )
        video = match.group("video")
        index = int(match.group("index"))
        out.setdefault(video, {}).setdefault(index, []).append(det.box)
    return out


@cli.command()
@click.argument("dataset_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--fraction", type=float, default=0.8, show_default=True, help="Train-side share of groups.")
@click.option("--group", "group_key", type=click.Choice(["image", "video"]), default="image", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--train-out", required=True, type=click.Path(dir_okay=False))
@click.option("--test-out", required=True, type=click.Path(dir_okay=False))
@click.option("--train-tag", default=None)
@click.option("--test-tag", default=None)
@click.option("--allow-degenerate", is_flag=True, default=False)
def split(dataset_path, fraction, group_key, seed, train_out, test_out, train_tag, test_tag, allow_degenerate) -> None:
    """Split a dataset into train/test by whole images or whole videos."""
    store = load_dataset(dataset_path)
    train, test = split_grouped(
        store,
        fraction,
        group_key,
        seed,
        allow_degenerate=allow_degenerate,
        train_tag=train_tag,
        test_tag=test_tag,
    )
    _write_text(train_out, dumps_canonical(store_to_jsonable(train)))
    _write_text(test_out, dumps_canonical(store_to_jsonable(test)))
    click.echo(
        f"split {len(store.images)} images into {len(train.images)} train / "
        f"{len(test.images)} test (group={group_key}, seed={seed})"
    )


def _load_predictions(path: str, gt: DatasetStore):
    """A predictions file is either a dataset document or a detection stream."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            doc = None
        if isinstance(doc, dict) and "images" in doc:
            return store_from_jsonable(doc, source=path)
    return read_detections(path)


@cli.command(name="eval")
@click.argument("pred_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("gt_path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--iou-thresholds",
    default=None,
    help="Comma-separated AP thresholds; defaults to 0.50:0.95 in 0.05 steps.",
)
@click.option("--pr-iou", type=float, default=0.75, show_default=True)
@click.option("--pr-score-cutoff", type=float, default=0.5, show_default=True)
@click.option("--nms-iou", type=float, default=None, help="Apply class-agnostic NMS to predictions first.")
@click.option("--nms-per-class", is_flag=True, default=False, help="Make the pre-evaluation NMS class-aware.")
@click.option("--include-fallback-in-cap", is_flag=True, default=False, help="Keep the fallback class inside the cAP range.")
@click.option("--angle-report", is_flag=True, default=False, help="Group mAP by camera angle (requires angle metadata).")
@click.option("--subsets", is_flag=True, default=False, help="Also report mAP/aAP on first frames per video.")
@click.option("--report-out", type=click.Path(dir_okay=False), help="Write the text report here as well.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write flat metric rows here.")
@click.option("--compare", "compare_path", type=click.Path(exists=True, dir_okay=False), help="Second prediction file; z-test the difference.")
@click.option("--alpha", type=float, default=0.05, show_default=True)
def eval_cmd(
    pred_path,
    gt_path,
    iou_thresholds,
    pr_iou,
    pr_score_cutoff,
    nms_iou,
    nms_per_class,
    include_fallback_in_cap,
    angle_report,
    subsets,
    report_out,
    csv_path,
    compare_path,
    alpha,
) -> None:
    """Score predictions against ground truth with the full metric suite."""
    gt = load_dataset(gt_path)
    preds = _load_predictions(pred_path, gt)
    if iou_thresholds is not None:
        try:
            thresholds = tuple(float(v) for v in iou_thresholds.split(","))
        except ValueError:
            raise click.UsageError(f"--iou-thresholds must be comma-separated numbers, got {iou_thresholds!r}")
    else:
        thresholds = COCO_IOU_THRESHOLDS
    evaluator = DetectionEvaluator(
        iou_thresholds=thresholds,
        pr_iou=pr_iou,
        pr_score_cutoff=pr_score_cutoff,
        exclude_fallback_from_cap_range=not include_fallback_in_cap,
        nms_iou=nms_iou,
        nms_class_agnostic=not nms_per_class,
    )
    report = evaluator.evaluate(preds, gt, with_angles=angle_report, with_subsets=subsets)
    text = render_report(report, gt.categories)
    click.echo(text, nl=False)
    click.echo(f"mAP {report.map:.3f}")
    if report_out:
        _write_text(report_out, text)
    if csv_path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["section", "key", "value"])
        writer.writerows(report_csv_rows(report, gt.categories))
        _write_text(csv_path, buffer.getvalue())
    if compare_path:
        other = _load_predictions(compare_path, gt)
        for metric, result in evaluator.compare(preds, other, gt, alpha=alpha).items():
            verdict = "significant" if result.significant else "not significant"
            click.echo(
                f"z-test ({metric}): z={result.z:.3f}, p={result.p_value:.4f}, "
                f"{verdict} at alpha={alpha:g}"
            )


@cli.command()
@click.argument("dataset_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write (class, frequency) rows here.")
def histogram(dataset_path, csv_path) -> None:
    """Relative class distribution of a dataset's annotations."""
    store = load_dataset(dataset_path)
    rows = class_histogram(store)
    for category, freq in rows:
        click.echo(f"{category.name}\t{freq:.6f}")
    if csv_path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["class", "relative_frequency"])
        for category, freq in rows:
            writer.writerow([category.name, f"{freq:.6f}"])
        _write_text(csv_path, buffer.getvalue())


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        return 1
    except (DatasetError, BoxError, EvalError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
