"""Graf hip measurement and evaluation engine for ultrasound segmentation masks."""

from .curvefit import FitConfig, cosine_similarity, fit_cubic, split_boundary, ss_score
from .geometry import (
    Contour,
    Line2D,
    angle_between,
    extract_contours,
    fit_line_tls,
    largest_component,
    tangent_from_point,
)
from .imgio import (
    BinaryMask,
    LandmarkPoint,
    LandmarkSet,
    SceneRecord,
    StructureSet,
    decode_mask,
    decode_rle,
    encode_rle,
    load_manifest,
)
from .measure import (
    LossWeights,
    MeasurementReport,
    br_distance,
    check_standard_plane,
    composite_score,
    fuse_landmarks,
    infer_landmarks_from_masks,
    landmark_ce,
    measure_scene,
)
from .metrics import dsc, hausdorff, summarize, two_sample_t
from .phantom import PhantomSpec, generate, generate_batch

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "Contour", "FitConfig", "LandmarkPoint", "LandmarkSet", "Line2D",
    "LossWeights", "MeasurementReport", "PhantomSpec", "SceneRecord", "StructureSet",
    "angle_between", "br_distance", "check_standard_plane", "composite_score",
    "cosine_similarity", "decode_mask", "decode_rle", "dsc", "encode_rle",
    "extract_contours", "fit_cubic", "fit_line_tls", "fuse_landmarks", "generate",
    "generate_batch", "hausdorff", "infer_landmarks_from_masks", "landmark_ce",
    "largest_component", "load_manifest", "measure_scene", "split_boundary",
    "ss_score", "summarize", "tangent_from_point", "two_sample_t",
]
