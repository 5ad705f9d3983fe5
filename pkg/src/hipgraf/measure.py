"""Graf measurement: landmarks, measurement lines, alpha/beta and hip type."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateGeometryError,
    DomainError,
    MissingStructureError,
    TangentUndefinedError,
    UnmeasurableLandmarkError,
)
from .geometry import (
    Line2D,
    angle_between,
    extract_contours,
    fit_line_tls,
    largest_component,
    tangent_from_point,
)
from .imgio import (
    LANDMARK_NAMES,
    STRUCTURE_NAMES,
    BinaryMask,
    LandmarkPoint,
    LandmarkSet,
    StructureSet,
)

TYPE_I = "type_I"
TYPE_II = "type_II"


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.5
    lambda4: float = 1.0

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class MeasureConfig:
    graf_cutoff: float = 60.0
    near_cutoff_band: float = 0.1


@dataclass(frozen=True)
class MeasurementReport:
    base_line: Line2D
    bony_roof_line: Line2D
    cartilage_roof_line: Line2D
    alpha: float
    beta: float
    graf_type: str
    standard_plane: bool
    landmarks_used: LandmarkSet
    warnings: tuple[str, ...] = field(default=())


# -- landmarks ---------------------------------------------------------------

def lateral_edge(mask: BinaryMask) -> np.ndarray:
    """Leftmost pixel per row of the largest component, as (x, y) rows sorted by y."""
    comp = largest_component(mask).data
    rows = np.flatnonzero(comp.any(axis=1))
    cols = comp[rows].argmax(axis=1)
    return np.column_stack([cols, rows]).astype(float)


def infer_landmarks_from_masks(s: StructureSet) -> tuple[LandmarkSet, list[str]]:
    """Mask-derived P1 (rim), P2 (lower limb top) and P3 (labrum centroid)."""
    ilium = s.flat_ilium
    if ilium is None or ilium.is_empty:
        raise MissingStructureError("flat_ilium is absent or empty")
    warnings: list[str] = []

    edge = lateral_edge(ilium)
    x1, y1 = edge[-1]
    if largest_component(ilium).area == 1:
        warnings.append("flat_ilium is a single pixel")
    p1 = LandmarkPoint(float(x1), float(y1), "mask_derived")

    p2 = None
    if s.lower_limb is not None and not s.lower_limb.is_empty:
        comp = largest_component(s.lower_limb)
        ys, xs = np.nonzero(comp.data)
        # np.nonzero is row-major: the first entry has min y, then min x
        p2 = LandmarkPoint(float(xs[0]), float(ys[0]), "mask_derived")
        if comp.area == 1:
            warnings.append("lower_limb is a single pixel")

    p3 = None
    if s.labrum is not None and not s.labrum.is_empty:
        comp = largest_component(s.labrum)
        ys, xs = np.nonzero(comp.data)
        p3 = LandmarkPoint(float(xs.mean()), float(ys.mean()), "mask_derived")
        if comp.area == 1:
            warnings.append("labrum is a single pixel")

    return LandmarkSet(p1, p2, p3), warnings


def fuse_landmarks(mask_derived: Optional[LandmarkSet],
                   predicted: Optional[LandmarkSet]) -> tuple[LandmarkSet, list[str]]:
    """Average mask-derived and predicted landmarks; pass through a lone source."""
    mask_derived = mask_derived or LandmarkSet()
    predicted = predicted or LandmarkSet()
    out = {}
    warnings = []
    for name in LANDMARK_NAMES:
        s, k = mask_derived.get(name), predicted.get(name)
        if s is not None and k is not None:
            out[name] = LandmarkPoint((s.x + k.x) / 2.0, (s.y + k.y) / 2.0, "fused")
        elif s is not None or k is not None:
            only = s if s is not None else k
            which = "mask-derived" if s is not None else "predicted"
            warnings.append(f"{name}: only the {which} source is available")
            out[name] = replace(only, source="fused")
        else:
            raise UnmeasurableLandmarkError(name)
    return LandmarkSet(**out), warnings


def br_distance(m: LandmarkPoint | Sequence[float], k: LandmarkPoint | Sequence[float]) -> float:
    mx, my = (m.x, m.y) if isinstance(m, LandmarkPoint) else m
    kx, ky = (k.x, k.y) if isinstance(k, LandmarkPoint) else k
    return math.sqrt((mx - kx) ** 2 + (my - ky) ** 2)


def landmark_ce(labels: Sequence[float], probs: Sequence[float]) -> float:
    """Cross-entropy of a one-hot label against a probability vector.

    Returns ``inf`` when the true class has zero probability.
    """
    y = np.asarray(labels, dtype=float)
    p = np.asarray(probs, dtype=float)
    if y.shape != p.shape or y.ndim != 1:
        raise DomainError("labels and probs must be 1-D vectors of equal length")
    if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-6:
        raise DomainError("probs must lie in [0, 1] and sum to 1")
    if not (np.all((y == 0) | (y == 1)) and y.sum() == 1):
        raise DomainError("labels must be one-hot")
    true_p = float(p[int(np.argmax(y))])
    if true_p == 0.0:
        return math.inf
    return -math.log(true_p)


def composite_score(maskrcnn_term: float, landmark_term: float, br_term: float,
                    ss_term: float, w: LossWeights = LossWeights()) -> float:
    terms = (maskrcnn_term, landmark_term, br_term, ss_term)
    for t in terms:
        if math.isnan(t) or t < 0:
            raise DomainError(f"loss terms must be non-negative, got {terms}")
    return (w.lambda1 * maskrcnn_term + w.lambda2 * landmark_term
            + w.lambda3 * br_term + w.lambda4 * ss_term)


def check_standard_plane(s: StructureSet) -> tuple[bool, list[str]]:
    """Standard plane iff all four structures are present and non-empty."""
    missing = [n for n in STRUCTURE_NAMES if s.get(n) is None or s.get(n).is_empty]
    return not missing, missing


def classify(alpha: float, cutoff: float = 60.0) -> str:
    return TYPE_I if alpha >= cutoff else TYPE_II


# -- lines ---------------------------------------------------------------------

def base_line(ilium: BinaryMask) -> Line2D:
    edge = lateral_edge(ilium)
    if len(edge) < 2:
        raise DegenerateGeometryError("lateral edge of flat_ilium spans a single row")
    return fit_line_tls(edge)


def bony_roof_line(ilium: BinaryMask, p2: LandmarkPoint, p1: LandmarkPoint) -> tuple[Line2D, list[str]]:
    """Hull tangent from P2 on the side passing nearest the bony rim.

    Falls back to the line P2-P1 when P2 sits inside the ilium hull.
    """
    contour = extract_contours(ilium)[0]
    try:
        candidates = [tangent_from_point(contour, (p2.x, p2.y), side)
                      for side in ("clockwise", "counterclockwise")]
    except TangentUndefinedError:
        return Line2D.through((p2.x, p2.y), (p1.x, p1.y)), [
            "lower limb point inside ilium hull; bony roof line drawn through bony rim"]
    best = min(candidates, key=lambda ln: ln.distance((p1.x, p1.y)))
    return best, []


def measure_scene(s: StructureSet, predicted: Optional[LandmarkSet] = None,
                  config: MeasureConfig = MeasureConfig()) -> MeasurementReport:
    ilium = s.flat_ilium
    if ilium is None or ilium.is_empty:
        raise MissingStructureError("flat_ilium is absent or empty")

    derived, warnings = infer_landmarks_from_masks(s)
    marks, fuse_warn = fuse_landmarks(derived, predicted)
    warnings += fuse_warn
    p1, p2, p3 = marks.p1_bony_rim, marks.p2_lower_limb, marks.p3_labrum_mid

    lb = base_line(ilium)
    l1, roof_warn = bony_roof_line(ilium, p2, p1)
    warnings += roof_warn
    l2 = Line2D.through((p1.x, p1.y), (p3.x, p3.y))

    alpha = angle_between(lb, l1)
    beta = angle_between(lb, l2)
    graf = classify(alpha, config.graf_cutoff)
    if abs(alpha - config.graf_cutoff) < config.near_cutoff_band:
        warnings.append(f"alpha {alpha:.3f} within {config.near_cutoff_band} deg of cutoff")

    standard, missing = check_standard_plane(s)
    if not standard:
        warnings.append("non-standard plane; missing: " + ", ".join(missing))

    return MeasurementReport(lb, l1, l2, alpha, beta, graf, standard, marks, tuple(warnings))
