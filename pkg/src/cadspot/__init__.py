"""Pixel-wise symbol spotting for CAD rasters.

Keypoints are localized as peaks of per-class Gaussian heatmaps with a
quantization-offset head for sub-cell accuracy, trained under an
annealed kernel-width schedule, then grouped into rectangle symbols by
a clockwise compatibility traversal. A built-in scene generator
provides annotated synthetic drawings for end-to-end verification.
"""

from .codec import (
    EncodedTarget,
    Heatmap,
    OffsetMap,
    decode_argmax,
    decode_soft_argmax,
    dequantize,
    encode_heatmap,
    encode_offsets,
    encode_target,
    heatmap_gradient,
    mvd_drift_probability,
    quantize,
)
from .config import ConfigError, RunConfig, default_config_text, load_run_config
from .detect import (
    ModelPredictor,
    OraclePredictor,
    PatchGrid,
    dedup_detections,
    detect_image,
    nms,
    read_detections_csv,
    tile,
    write_detections_csv,
)
from .grouping import GroupingResult, consistence, group_symbols
from .metrics import (
    MatchResult,
    apek,
    box_iou,
    evaluate_keypoints,
    match_keypoints,
    match_symbols,
    precision_recall_f1,
    symbol_f1,
)
from .model import (
    CheckpointError,
    CheckpointVersionError,
    LossParts,
    Predictor,
    PredictorConfig,
    TrainingDivergedError,
    TrainReport,
    forward,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)
from .primitives import Detection, Keypoint, RectangleSymbol, RegionBox, classify_rectangle
from .raster import load_png, load_pgm, save_png, save_pgm
from .render import render_overlay
from .rng import seed_stream
from .schedule import KernelSchedule, sigma_at, terminal_sigma, validate
from .synth import (
    AnnotatedImage,
    AnnotationError,
    GenerationError,
    SceneSpec,
    generate_scene,
    load_annotations,
    save_annotations,
)
from .taxonomy import CompatibilityTable, DEFAULT_TABLE, KeypointType, arms_of

__version__ = "0.1.0"

__all__ = [
    "AnnotatedImage",
    "AnnotationError",
    "CheckpointError",
    "CheckpointVersionError",
    "CompatibilityTable",
    "ConfigError",
    "DEFAULT_TABLE",
    "Detection",
    "EncodedTarget",
    "GenerationError",
    "GroupingResult",
    "Heatmap",
    "KernelSchedule",
    "Keypoint",
    "KeypointType",
    "LossParts",
    "MatchResult",
    "ModelPredictor",
    "OffsetMap",
    "OraclePredictor",
    "PatchGrid",
    "Predictor",
    "PredictorConfig",
    "RectangleSymbol",
    "RegionBox",
    "RunConfig",
    "SceneSpec",
    "TrainReport",
    "TrainingDivergedError",
    "apek",
    "arms_of",
    "box_iou",
    "classify_rectangle",
    "consistence",
    "decode_argmax",
    "decode_soft_argmax",
    "dedup_detections",
    "default_config_text",
    "dequantize",
    "detect_image",
    "encode_heatmap",
    "encode_offsets",
    "encode_target",
    "evaluate_keypoints",
    "forward",
    "generate_scene",
    "group_symbols",
    "heatmap_gradient",
    "load_annotations",
    "load_checkpoint",
    "load_pgm",
    "load_png",
    "load_run_config",
    "loss",
    "match_keypoints",
    "match_symbols",
    "mvd_drift_probability",
    "nms",
    "precision_recall_f1",
    "quantize",
    "read_detections_csv",
    "render_overlay",
    "save_annotations",
    "save_checkpoint",
    "save_pgm",
    "save_png",
    "seed_stream",
    "sigma_at",
    "symbol_f1",
    "terminal_sigma",
    "tile",
    "train",
    "validate",
    "write_detections_csv",
]
