"""Cubic boundary fits and the shape-similarity score.

A structure's outer contour is cut at its extreme-x points into an upper and
a lower curve.  Each curve is fitted with ``y = a x^3 + b x^2 + c x + d``
by ridge least squares on x normalised to [-1, 1].  Similarity between two
structures compares the ``[a, b, c]`` vectors of matching curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    SingularFitError,
    StructureMismatchError,
    TooNarrowError,
    UndefinedSimilarityError,
)
from .geometry import Contour, extract_contours
from .imgio import STRUCTURE_NAMES, BinaryMask, StructureSet

ZERO_NORM = 1e-12


@dataclass(frozen=True)
class FitConfig:
    xi: float = 1e-3
    min_points: int = 4

    def __post_init__(self) -> None:
        if not (self.xi >= 0 and math.isfinite(self.xi)):
            raise ValueError(f"xi must be a finite non-negative number, got {self.xi}")
        if self.min_points < 4:
            raise ValueError(f"min_points must be >= 4, got {self.min_points}")


@dataclass(frozen=True)
class PolyCoeffs:
    a: float
    b: float
    c: float
    d: float
    # affine map used on x: x_norm = (x - x_center) / x_half_range
    x_center: float = 0.0
    x_half_range: float = 1.0

    @property
    def f_vector(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=float)

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=float)

    def __call__(self, x: np.ndarray | float) -> np.ndarray | float:
        t = (np.asarray(x, dtype=float) - self.x_center) / self.x_half_range
        return ((self.a * t + self.b) * t + self.c) * t + self.d


@dataclass(frozen=True)
class BoundarySplit:
    upper: tuple[tuple[float, float], ...]
    lower: tuple[tuple[float, float], ...]
    # Full arcs between the two cut points before per-column deduplication.
    upper_arc: tuple[tuple[float, float], ...] = field(default=(), repr=False)
    lower_arc: tuple[tuple[float, float], ...] = field(default=(), repr=False)


def _dedupe(arc: Sequence[tuple[float, float]], keep_min_y: bool) -> tuple:
    best: dict[float, float] = {}
    for x, y in arc:
        if x not in best:
            best[x] = y
        elif keep_min_y:
            best[x] = min(best[x], y)
        else:
            best[x] = max(best[x], y)
    return tuple((x, best[x]) for x in sorted(best))


def split_boundary(contour: Contour) -> BoundarySplit:
    pts = list(contour.points)
    if len(pts) < 8:
        raise TooNarrowError(f"contour has {len(pts)} points, need at least 8")
    xs = [p[0] for p in pts]
    if max(xs) - min(xs) < 4:
        raise TooNarrowError(f"contour x-extent {max(xs) - min(xs):g} px is below 4 px")

    i_min = min(range(len(pts)), key=lambda i: (pts[i][0], pts[i][1]))
    i_max = min(range(len(pts)), key=lambda i: (-pts[i][0], pts[i][1]))
    n = len(pts)
    # forward arc i_min -> i_max and backward arc i_min -> i_max (other way round)
    fwd = [pts[(i_min + k) % n] for k in range((i_max - i_min) % n + 1)]
    bwd = [pts[(i_min - k) % n] for k in range((i_min - i_max) % n + 1)]
    if np.mean([p[1] for p in fwd]) <= np.mean([p[1] for p in bwd]):
        up_arc, low_arc = fwd, bwd
    else:
        up_arc, low_arc = bwd, fwd
    return BoundarySplit(
        upper=_dedupe(up_arc, keep_min_y=True),
        lower=_dedupe(low_arc, keep_min_y=False),
        upper_arc=tuple(up_arc),
        lower_arc=tuple(low_arc),
    )


def fit_cubic(points: Sequence[Sequence[float]], config: FitConfig = FitConfig()) -> PolyCoeffs:
    """Ridge fit theta = (X^T X + xi I)^-1 X^T y with columns [t^3, t^2, t, 1]."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < config.min_points:
        raise TooNarrowError(f"{len(pts)} points given, need at least {config.min_points}")
    x, y = pts[:, 0], pts[:, 1]
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise TooNarrowError("all x values are identical")
    center, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    t = (x - center) / half
    X = np.vander(t, 4)
    A = X.T @ X + config.xi * np.eye(4)
    if config.xi == 0.0 and np.linalg.matrix_rank(X) < 4:
        raise SingularFitError("design matrix is rank deficient and xi = 0")
    try:
        theta = np.linalg.solve(A, X.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SingularFitError(str(exc)) from exc
    a, b, c, d = (float(v) for v in theta)
    return PolyCoeffs(a, b, c, d, center, half)


def cosine_similarity(f1: Sequence[float], f2: Sequence[float]) -> float:
    """|<f1, f2>| / (|f1| |f2|), clipped to [0, 1]."""
    u = np.asarray(f1, dtype=float)
    v = np.asarray(f2, dtype=float)
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise UndefinedSimilarityError("cosine similarity of a zero vector")
    if np.array_equal(u, v) or np.array_equal(u, -v):
        return 1.0
    return min(1.0, abs(float(u @ v)) / (nu * nv))


def curve_similarity(f1: Sequence[float], f2: Sequence[float]) -> float:
    """Cosine similarity with the flat-curve convention for near-zero vectors."""
    z1 = np.linalg.norm(f1) < ZERO_NORM
    z2 = np.linalg.norm(f2) < ZERO_NORM
    if z1 and z2:
        return 1.0
    if z1 or z2:
        return 0.0
    return cosine_similarity(f1, f2)


def boundary_fits(mask: BinaryMask, config: FitConfig = FitConfig()) -> tuple[PolyCoeffs, PolyCoeffs]:
    """Upper and lower cubic fits of the largest component's outer contour."""
    contour = extract_contours(mask)[0]
    split = split_boundary(contour)
    return fit_cubic(split.upper, config), fit_cubic(split.lower, config)


def structure_similarity(pred: BinaryMask, truth: BinaryMask,
                         config: FitConfig = FitConfig()) -> float:
    pu, pl = boundary_fits(pred, config)
    tu, tl = boundary_fits(truth, config)
    return 0.5 * (curve_similarity(pu.f_vector, tu.f_vector)
                  + curve_similarity(pl.f_vector, tl.f_vector))


@dataclass(frozen=True)
class SSResult:
    per_structure: dict[str, Optional[float]]  # 1 - cs_j, None when skipped
    total: float

    @property
    def skipped(self) -> list[str]:
        return [k for k, v in self.per_structure.items() if v is None]


def _present(m: Optional[BinaryMask]) -> bool:
    return m is not None and not m.is_empty


def ss_score(pred: StructureSet, truth: StructureSet,
             config: FitConfig = FitConfig()) -> SSResult:
    """Per-scene shape-similarity score summed over the four structures."""
    per: dict[str, Optional[float]] = {}
    total = 0.0
    for name in STRUCTURE_NAMES:
        p, t = pred.get(name), truth.get(name)
        if _present(p) != _present(t):
            where = "prediction" if _present(p) else "ground truth"
            raise StructureMismatchError(f"{name} present only in the {where}")
        if not _present(p):
            per[name] = None
            continue
        term = 1.0 - structure_similarity(p, t, config)
        term = min(1.0, max(0.0, term))
        per[name] = term
        total += term
    return SSResult(per, total)
