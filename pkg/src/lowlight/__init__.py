"""Deterministic low-light imaging toolkit.

Corruption synthesis for restoration pre-training, light/shuffle
augmentations, restoration metrics, and lighting-condition-aware detection
evaluation over COCO-style annotations.
"""

from .imgcore import (
    ImageBuffer,
    ImageFormatError,
    LowlightError,
    Region,
    RngStream,
    ValidationError,
    extract_random_patch,
    load_image,
    save_png,
)
from .corrupt import (
    CorruptionConfig,
    CorruptionRecord,
    apply_corruption,
    corrupt_patch,
    generate_restoration_dataset,
    posterize,
    sample_poisson,
    shot_noise,
)
from .augment import (
    LightAugConfig,
    ShuffleConfig,
    adjust_light,
    block_shuffle,
    histogram_equalize,
    patch_light_augment,
)
from .metrics import (
    FeatureDistance,
    LossWeights,
    SSIMConfig,
    mse,
    restoration_loss,
    ssim,
)
from .annotations import (
    CLASSES,
    AnnotationSet,
    DatasetStats,
    Detection,
    ImageInfo,
    Instance,
    dataset_stats,
    filter_instances,
    load_annotations,
    load_detections,
    save_annotations,
    save_detections,
)
from .evaluation import (
    EvalOptions,
    EvalReport,
    MatchSet,
    PRCurve,
    conditional_eval,
    evaluate,
    iou,
    match_detections,
    pr_curve,
)
from .svgplot import emit_pr_plot, render_pr_svg

__version__ = "0.1.0"

__all__ = [
    "ImageBuffer", "ImageFormatError", "LowlightError", "Region", "RngStream",
    "ValidationError", "extract_random_patch", "load_image", "save_png",
    "CorruptionConfig", "CorruptionRecord", "apply_corruption", "corrupt_patch",
    "generate_restoration_dataset", "posterize", "sample_poisson", "shot_noise",
    "LightAugConfig", "ShuffleConfig", "adjust_light", "block_shuffle",
    "histogram_equalize", "patch_light_augment",
    "FeatureDistance", "LossWeights", "SSIMConfig", "mse", "restoration_loss", "ssim",
    "CLASSES", "AnnotationSet", "DatasetStats", "Detection", "ImageInfo", "Instance",
    "dataset_stats", "filter_instances", "load_annotations", "load_detections",
    "save_annotations", "save_detections",
    "EvalOptions", "EvalReport", "MatchSet", "PRCurve", "conditional_eval",
    "evaluate", "iou", "match_detections", "pr_curve",
    "emit_pr_plot", "render_pr_svg",
    "__version__",
]
