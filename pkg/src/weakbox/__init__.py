"""weakbox: annotate detection datasets with weak and propagated supervision.

The pipeline surfaces are sklearn-style estimators (construct with
parameters, call ``apply``/``transform``/``predict``/``evaluate``,
introspect with ``get_params``); plumbing is plain functions.
"""

from .boxes import (
    BoundingBox,
    BoxError,
    Detection,
    ImageDims,
    area,
    capture_rate,
    clip_detections,
    image_area_fraction,
    intersection_area,
    iou,
    nms,
)
from .datasets import (
    Annotation,
    Category,
    CategoryTable,
    DatasetError,
    DatasetStore,
    ImageMeta,
    ImageRecord,
    IntegrityError,
    ParseError,
    SchemaError,
    baked_goods_categories,
    class_histogram,
    load_dataset,
    load_yolo,
    save_dataset,
)
from .evaluation import (
    COCO_IOU_THRESHOLDS,
    DetectionEvaluator,
    EmbeddingSet,
    EvalError,
    EvalReport,
    MatchCounts,
    ZTestResult,
    average_precision,
    map_coco,
    match_detections,
    proportion_z_test,
    topk_avg_cosine,
)
from .filters import (
    BackgroundFilter,
    CrowdFilter,
    DuplicateFilter,
    FilterPipeline,
    FilterTrace,
    NestedFilter,
    Removal,
)
from .propagate import (
    FirstFrameQuery,
    GreedyIouTracker,
    annotation_cost_reduction,
    ingest_track_stream,
    select_queries,
)
from .splits import frame_manifest, split_grouped
from .streams import (
    TrackRecord,
    read_detections,
    read_embedding_rows,
    read_tracks,
    write_detections,
    write_embedding_rows,
    write_tracks,
)
from .weaklabel import (
    WeakLabeler,
    assign_image_label,
    build_weak_dataset,
    validate_single_class,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "BackgroundFilter",
    "BoundingBox",
    "BoxError",
    "COCO_IOU_THRESHOLDS",
    "Category",
    "CategoryTable",
    "CrowdFilter",
    "DatasetError",
    "DatasetStore",
    "Detection",
    "DetectionEvaluator",
    "DuplicateFilter",
    "EmbeddingSet",
    "EvalError",
    "EvalReport",
    "FilterPipeline",
    "FilterTrace",
    "FirstFrameQuery",
    "GreedyIouTracker",
    "ImageDims",
    "ImageMeta",
    "ImageRecord",
    "IntegrityError",
    "MatchCounts",
    "NestedFilter",
    "ParseError",
    "Removal",
    "SchemaError",
    "TrackRecord",
    "WeakLabeler",
    "ZTestResult",
    "annotation_cost_reduction",
    "area",
    "assign_image_label",
    "average_precision",
    "baked_goods_categories",
    "build_weak_dataset",
    "capture_rate",
    "class_histogram",
    "clip_detections",
    "frame_manifest",
    "image_area_fraction",
    "ingest_track_stream",
    "intersection_area",
    "iou",
    "load_dataset",
    "load_yolo",
    "map_coco",
    "match_detections",
    "nms",
    "proportion_z_test",
    "read_detections",
    "read_embedding_rows",
    "read_tracks",
    "save_dataset",
    "select_queries",
    "split_grouped",
    "topk_avg_cosine",
    "validate_single_class",
    "write_detections",
    "write_embedding_rows",
    "write_tracks",
]
