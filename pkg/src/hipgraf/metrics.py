"""Segmentation, landmark and angle evaluation statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, special

from .errors import DimensionError, EmptyEvaluationError, UndefinedDistanceError
from .imgio import LANDMARK_NAMES, STRUCTURE_NAMES, BinaryMask, LandmarkPoint
from .measure import TYPE_I, TYPE_II, MeasurementReport


def _same_shape(x: BinaryMask, y: BinaryMask) -> None:
    if x.shape != y.shape:
        raise DimensionError(f"mask shapes differ: {x.shape} vs {y.shape}")


def dsc(x: BinaryMask, y: BinaryMask) -> float:
    """Dice coefficient.  Two empty masks score 1.0, one empty mask 0.0."""
    _same_shape(x, y)
    nx, ny = x.area, y.area
    if nx == 0 and ny == 0:
        return 1.0
    inter = int(np.logical_and(x.data, y.data).sum())
    return 2.0 * inter / (nx + ny)


def _directed_hd(a: np.ndarray, b: np.ndarray) -> float:
    # exact Euclidean distance from every pixel to the nearest pixel of ``b``
    dist = ndimage.distance_transform_edt(~b)
    return float(dist[a].max())


def hausdorff(x: BinaryMask, y: BinaryMask) -> float:
    """Symmetric Hausdorff distance between foreground pixel sets, in pixels."""
    _same_shape(x, y)
    if x.is_empty or y.is_empty:
        raise UndefinedDistanceError("Hausdorff distance needs two non-empty masks")
    return max(_directed_hd(x.data, y.data), _directed_hd(y.data, x.data))


def landmark_error(pred: LandmarkPoint, truth: LandmarkPoint) -> float:
    return math.hypot(pred.x - truth.x, pred.y - truth.y)


def angle_errors(pred: MeasurementReport, truth_alpha: float, truth_beta: float) -> tuple[float, float]:
    return abs(pred.alpha - truth_alpha), abs(pred.beta - truth_beta)


@dataclass(frozen=True)
class EvalRecord:
    scene_id: str
    dsc: dict[str, Optional[float]]
    hd: dict[str, Optional[float]]
    landmark_dist: dict[str, Optional[float]]
    alpha_pred: float
    alpha_true: float
    beta_pred: float
    beta_true: float
    predicted_type: str
    true_type: str
    warnings: tuple[str, ...] = field(default=())

    @property
    def alpha_error(self) -> float:
        return abs(self.alpha_pred - self.alpha_true)

    @property
    def beta_error(self) -> float:
        return abs(self.beta_pred - self.beta_true)


@dataclass(frozen=True)
class Thresholds:
    success: float = 5.0
    poor: float = 10.0


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int


@dataclass(frozen=True)
class AngleSummary:
    error: MeanStd
    success_rate: float
    poor_rate: float
    cdf: tuple[tuple[float, float], ...]
    pearson: float
    ttest: Optional[TTestResult]


@dataclass(frozen=True)
class EvalSummary:
    n: int
    alpha: AngleSummary
    beta: AngleSummary
    dsc: dict[str, MeanStd]
    hd: dict[str, MeanStd]
    landmark: dict[str, MeanStd]
    misclassification: dict[str, float]


def mean_std(values: Sequence[Optional[float]], std_mode: str = "population") -> MeanStd:
    """Mean and standard deviation ignoring missing (None/NaN) values."""
    arr = np.array([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return MeanStd(math.nan, math.nan, 0)
    ddof = 0 if std_mode == "population" else 1
    std = float(arr.std(ddof=ddof)) if arr.size > ddof else math.nan
    return MeanStd(float(arr.mean()), std, int(arr.size))


def empirical_cdf(errors: Sequence[float]) -> tuple[tuple[float, float], ...]:
    """(error, fraction of samples <= error) at each distinct sorted error."""
    arr = np.sort(np.asarray(errors, dtype=float))
    n = arr.size
    out = []
    for i, v in enumerate(arr):
        if i + 1 < n and arr[i + 1] == v:
            continue
        out.append((float(v), (i + 1) / n))
    return tuple(out)


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Pearson correlation; identical vectors give 1.0, other constant input NaN."""
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.size == 0:
        raise ValueError("pearson needs two non-empty vectors of equal length")
    if np.array_equal(x, y):
        return 1.0
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if den == 0.0:
        return math.nan
    return max(-1.0, min(1.0, float(xc @ yc) / den))


def t_sf(t: float, df: int) -> float:
    """Upper-tail probability of Student's t."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    x = df / (df + t * t)
    half = 0.5 * special.betainc(0.5 * df, 0.5, x)
    return half if t >= 0 else 1.0 - half


def two_sample_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> TTestResult:
    """Pooled-variance Student t-test with a two-sided p-value."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    na, nb = a.size, b.size
    df = na + nb - 2
    diff = float(a.mean() - b.mean())
    pooled = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / df
    se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    if se == 0.0:
        if diff == 0.0:
            return TTestResult(0.0, 1.0, df)
        return TTestResult(math.copysign(math.inf, diff), 0.0, df)
    t = diff / se
    p = min(1.0, 2.0 * t_sf(abs(t), df))
    return TTestResult(t, p, df)


def _angle_summary(pred: list[float], true: list[float], th: Thresholds,
                   std_mode: str) -> AngleSummary:
    err = [abs(p - t) for p, t in zip(pred, true)]
    n = len(err)
    try:
        tt = two_sample_t(pred, true)
    except ValueError:
        tt = None
    return AngleSummary(
        error=mean_std(err, std_mode),
        success_rate=sum(e < th.success for e in err) / n,
        poor_rate=sum(e > th.poor for e in err) / n,
        cdf=empirical_cdf(err),
        pearson=pearson(pred, true),
        ttest=tt,
    )


def summarize(records: Sequence[EvalRecord], thresholds: Thresholds = Thresholds(),
              std_mode: str = "population") -> EvalSummary:
    if not records:
        raise EmptyEvaluationError("no records to summarize")
    if std_mode not in ("population", "sample"):
        raise ValueError(f"std_mode must be 'population' or 'sample', got {std_mode!r}")
    n = len(records)
    alpha = _angle_summary([r.alpha_pred for r in records], [r.alpha_true for r in records],
                           thresholds, std_mode)
    beta = _angle_summary([r.beta_pred for r in records], [r.beta_true for r in records],
                          thresholds, std_mode)
    fn = sum(r.true_type == TYPE_II and r.predicted_type == TYPE_I for r in records) / n
    fp = sum(r.true_type == TYPE_I and r.predicted_type == TYPE_II for r in records) / n
    return EvalSummary(
        n=n,
        alpha=alpha,
        beta=beta,
        dsc={s: mean_std([r.dsc.get(s) for r in records], std_mode) for s in STRUCTURE_NAMES},
        hd={s: mean_std([r.hd.get(s) for r in records], std_mode) for s in STRUCTURE_NAMES},
        landmark={k: mean_std([r.landmark_dist.get(k) for r in records], std_mode)
                  for k in LANDMARK_NAMES},
        misclassification={"overall": fn + fp, "false_negative": fn, "false_positive": fp},
    )
