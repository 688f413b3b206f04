"""Measurement and identification of bolts from backlit silhouettes.

The pipeline orients a binary component, measures its axes, removes the
head, classifies the threading, and estimates the thread pitch; the
identify layer matches measured features against an enrolled lookup
table.  A deterministic synthetic renderer provides ground truth for
testing and the `boltvision` command exposes the whole chain.
"""

from .errors import (
    BoltVisionError,
    BoundsError,
    ConfigError,
    CsvFormatError,
    EmptyInputError,
    EnrollmentError,
    GeometryError,
    InsufficientCrestsError,
    InsufficientDataError,
    MalformedBoltError,
    ParameterError,
    PgmFormatError,
    PitchParityError,
    ReportFormatError,
    SingularQuadError,
    StageError,
)
from .geometry import (
    RotatedRect,
    arc_length,
    convex_hull,
    is_contour_convex,
    min_area_rect,
    rect_of_mask,
    trace_contour,
    warp_to_upright,
)
from .identify import (
    LookupTable,
    MatchResult,
    TemplateEntry,
    enroll,
    load_table,
    nearest_match,
    px_to_mm,
    save_table,
)
from .imagecore import (
    AxisRect,
    BinaryImage,
    Component,
    FixedLevel,
    GrayImage,
    Otsu,
    PixelPoint,
    connected_components,
    count_white,
    crop,
    otsu_level,
    read_binary_pgm,
    read_pgm,
    rotate180,
    threshold,
    write_binary_pgm,
    write_pgm,
)
from .pipeline import (
    BoltFeatures,
    HeadCut,
    OrientedBolt,
    PipelineConfig,
    PitchTrace,
    ThreadingType,
    classify_threading,
    estimate_pitch,
    extract_features,
    measure_axes,
    orient,
    remove_head,
)
from .synth import (
    BoltSpec,
    GroundTruth,
    RenderParams,
    add_noise,
    load_catalog,
    render_bolt,
    save_catalog,
    standard_catalog,
)

__version__ = "0.1.0"

__all__ = [
    "AxisRect",
    "BinaryImage",
    "BoltFeatures",
    "BoltSpec",
    "BoltVisionError",
    "BoundsError",
    "Component",
    "ConfigError",
    "CsvFormatError",
    "EmptyInputError",
    "EnrollmentError",
    "FixedLevel",
    "GeometryError",
    "GrayImage",
    "GroundTruth",
    "HeadCut",
    "InsufficientCrestsError",
    "InsufficientDataError",
    "LookupTable",
    "MalformedBoltError",
    "MatchResult",
    "OrientedBolt",
    "Otsu",
    "ParameterError",
    "PgmFormatError",
    "PipelineConfig",
    "PitchParityError",
    "PixelPoint",
    "PitchTrace",
    "RenderParams",
    "ReportFormatError",
    "RotatedRect",
    "SingularQuadError",
    "StageError",
    "TemplateEntry",
    "ThreadingType",
    "add_noise",
    "arc_length",
    "classify_threading",
    "connected_components",
    "convex_hull",
    "count_white",
    "crop",
    "enroll",
    "estimate_pitch",
    "extract_features",
    "is_contour_convex",
    "load_catalog",
    "load_table",
    "measure_axes",
    "min_area_rect",
    "nearest_match",
    "orient",
    "otsu_level",
    "px_to_mm",
    "read_binary_pgm",
    "read_pgm",
    "rect_of_mask",
    "remove_head",
    "rotate180",
    "save_catalog",
    "save_table",
    "standard_catalog",
    "threshold",
    "trace_contour",
    "warp_to_upright",
    "write_binary_pgm",
    "write_pgm",
]
