"""Synthetic hip scenes with analytically known alpha and beta angles.

Layout (canonical orientation, lateral side on the image left, y down):

* flat ilium: a vertical band whose left edge is the base line.  It runs
  off the top of the canvas, as in a real scan, so the image border rather
  than a drawn end cap bounds it there.  Its bottom edge is the bony roof, a straight cut through the bony rim P1 that makes
  exactly ``alpha`` with the base line and rises medially.
* lower limb: a disk whose topmost pixel is the lower limb point P2, placed
  on the extension of the bony roof.
* labrum: a disk centred on P3, with P1->P3 at exactly ``beta`` to the base
  line, lateral and caudal of the rim.
* CO junction: a disk below the lower limb.

Lengths in :class:`PhantomScales` refer to a 512 px canvas and are scaled
with ``min(width, height) / 512``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import PhantomInfeasibleError
from .imgio import BinaryMask, GroundTruth, LandmarkPoint, LandmarkSet, SceneRecord, StructureSet

REFERENCE_CANVAS = 512.0
_EPS = 1e-9


@dataclass(frozen=True)
class PhantomScales:
    rim_x: float = 150.0
    rim_y: float = 300.0
    # far enough above the canvas that moderate rotations keep the cap outside
    ilium_top: float = -160.0
    roof_length: float = 180.0
    labrum_distance: float = 70.0
    labrum_radius: float = 12.0
    lower_limb_radius: float = 18.0
    co_offset: tuple[float, float] = (110.0, 120.0)
    co_radius: float = 16.0
    bridge_half_width: float = 3.0
    jitter_wavelength: tuple[float, float] = (32.0, 96.0)


@dataclass(frozen=True)
class PhantomSpec:
    alpha_true: float = 60.0
    beta_true: float = 55.0
    width: int = 512
    height: int = 512
    ilium_thickness: float = 24.0
    structure_scales: PhantomScales = field(default_factory=PhantomScales)
    edge_jitter_px: float = 0.0
    dropout_fraction: float = 0.0
    dropout_structures: tuple[str, ...] = ("labrum",)
    # Std of the Gaussian noise on predicted landmarks; None -> edge_jitter_px.
    landmark_jitter_px: Optional[float] = None
    rotation_deg: float = 0.0
    fused_structures: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not 40.0 <= self.alpha_true <= 80.0:
            raise ValueError(f"alpha_true must lie in [40, 80], got {self.alpha_true}")
        if not 30.0 <= self.beta_true <= 90.0:
            raise ValueError(f"beta_true must lie in [30, 90], got {self.beta_true}")
        if self.width < 128 or self.height < 128:
            raise ValueError(f"canvas must be at least 128x128, got {self.width}x{self.height}")
        if self.edge_jitter_px < 0:
            raise ValueError("edge_jitter_px must be non-negative")
        if not 0.0 <= self.dropout_fraction < 0.5:
            raise ValueError("dropout_fraction must lie in [0, 0.5)")
        if self.ilium_thickness <= 0:
            raise ValueError("ilium_thickness must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def scale(self) -> float:
        return min(self.width, self.height) / REFERENCE_CANVAS

    @property
    def landmark_sigma(self) -> float:
        return self.edge_jitter_px if self.landmark_jitter_px is None else self.landmark_jitter_px


@dataclass(frozen=True)
class PhantomScene:
    scene_id: str
    structures: StructureSet
    truth_structures: StructureSet
    landmarks_truth: LandmarkSet
    predicted_landmarks: LandmarkSet
    alpha_true: float
    beta_true: float
    provenance: PhantomSpec

    def to_record(self) -> SceneRecord:
        spec = self.provenance
        gt = GroundTruth(self.truth_structures, self.landmarks_truth,
                         self.alpha_true, self.beta_true)
        return SceneRecord(self.scene_id, spec.width, spec.height, self.structures,
                           self.predicted_landmarks, gt)


# -- signed distance primitives ---------------------------------------------------

class _Shape:
    """Signed distance field, negative inside, evaluated in image coordinates."""

    def sdf(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bbox(self) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bbox()
        return 0.5 * (x0 + x1), 0.5 * (y0 + y1)


@dataclass
class _Disk(_Shape):
    cx: float
    cy: float
    r: float

    def sdf(self, x, y):
        return np.hypot(x - self.cx, y - self.cy) - self.r

    def bbox(self):
        return self.cx - self.r, self.cy - self.r, self.cx + self.r, self.cy + self.r

    def center(self):
        return self.cx, self.cy


@dataclass
class _HalfPlanes(_Shape):
    """Convex polygon as an intersection of half-planes n.p <= c (n unit)."""

    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray  # only used for bounding box / centroid
    rot: "_Rotation"

    def sdf(self, x, y):
        u, v = self.rot.inverse(x, y)
        d = u[..., None] * self.normals[:, 0] + v[..., None] * self.normals[:, 1] - self.offsets
        return d.max(axis=-1)

    def bbox(self):
        xs, ys = self.rot.forward(self.vertices[:, 0], self.vertices[:, 1])
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())

    def center(self):
        xs, ys = self.rot.forward(self.vertices[:, 0], self.vertices[:, 1])
        return float(xs.mean()), float(ys.mean())


@dataclass
class _Capsule(_Shape):
    a: tuple[float, float]
    b: tuple[float, float]
    r: float

    def sdf(self, x, y):
        ax, ay = self.a
        bx, by = self.b
        dx, dy = bx - ax, by - ay
        t = np.clip(((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
        return np.hypot(x - ax - t * dx, y - ay - t * dy) - self.r

    def bbox(self):
        return (min(self.a[0], self.b[0]) - self.r, min(self.a[1], self.b[1]) - self.r,
                max(self.a[0], self.b[0]) + self.r, max(self.a[1], self.b[1]) + self.r)


@dataclass
class _Rotation:
    cx: float
    cy: float
    deg: float

    def forward(self, x, y):
        c, s = math.cos(math.radians(self.deg)), math.sin(math.radians(self.deg))
        x, y = np.asarray(x, float) - self.cx, np.asarray(y, float) - self.cy
        return c * x - s * y + self.cx, s * x + c * y + self.cy

    def inverse(self, x, y):
        c, s = math.cos(math.radians(self.deg)), math.sin(math.radians(self.deg))
        x, y = np.asarray(x, float) - self.cx, np.asarray(y, float) - self.cy
        return c * x + s * y + self.cx, -s * x + c * y + self.cy

    def point(self, p: Sequence[float]) -> tuple[float, float]:
        x, y = self.forward(p[0], p[1])
        return float(x), float(y)


# -- noise -------------------------------------------------------------------

class _EdgeNoise:
    """Smooth field bounded by ``amplitude``: a random mix of plane waves."""

    def __init__(self, rng: np.random.Generator, amplitude: float,
                 wavelengths: tuple[float, float], n_waves: int = 4) -> None:
        self.amplitude = amplitude
        self.weights = rng.dirichlet(np.ones(n_waves))
        lam = rng.uniform(*wavelengths, size=n_waves)
        theta = rng.uniform(0.0, 2 * math.pi, size=n_waves)
        self.kx = 2 * math.pi / lam * np.cos(theta)
        self.ky = 2 * math.pi / lam * np.sin(theta)
        self.phase = rng.uniform(0.0, 2 * math.pi, size=n_waves)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.amplitude == 0.0:
            return np.zeros(np.broadcast(x, y).shape)
        out = np.zeros(np.broadcast(x, y).shape)
        for w, kx, ky, ph in zip(self.weights, self.kx, self.ky, self.phase):
            out += w * np.sin(kx * x + ky * y + ph)
        return self.amplitude * out


def _rasterize(shapes: Sequence[_Shape], width: int, height: int,
               noise: Optional[_EdgeNoise], margin: float) -> np.ndarray:
    """Union of shapes; a pixel centre is inside iff sdf <= noise."""
    out = np.zeros((height, width), dtype=bool)
    for shape in shapes:
        x0, y0, x1, y1 = shape.bbox()
        c0 = max(0, int(math.floor(x0 - margin)))
        c1 = min(width - 1, int(math.ceil(x1 + margin)))
        r0 = max(0, int(math.floor(y0 - margin)))
        r1 = min(height - 1, int(math.ceil(y1 + margin)))
        if c1 < c0 or r1 < r0:
            continue
        ys, xs = np.mgrid[r0:r1 + 1, c0:c1 + 1].astype(float)
        level = shape.sdf(xs, ys)
        thresh = noise(xs, ys) if noise is not None else 0.0
        out[r0:r1 + 1, c0:c1 + 1] |= level <= thresh + _EPS
    return out


def _dropout(mask: np.ndarray, shape: _Shape, fraction: float, depth: float,
             rng: np.random.Generator) -> np.ndarray:
    """Delete a contiguous boundary band covering ``fraction`` of the perimeter angle."""
    if fraction <= 0.0:
        return mask
    cx, cy = shape.center()
    ys, xs = np.nonzero(mask)
    start = rng.uniform(0.0, 2 * math.pi)
    ang = np.mod(np.arctan2(ys - cy, xs - cx) - start, 2 * math.pi)
    in_arc = ang < 2 * math.pi * fraction
    near_edge = shape.sdf(xs.astype(float), ys.astype(float)) > -depth
    drop = in_arc & near_edge
    out = mask.copy()
    out[ys[drop], xs[drop]] = False
    return out


# -- generation ---------------------------------------------------------------

def _layout(spec: PhantomSpec) -> dict:
    f = spec.scale
    sc = spec.structure_scales
    a = math.radians(spec.alpha_true)
    b = math.radians(spec.beta_true)
    rot = _Rotation((spec.width - 1) / 2.0, (spec.height - 1) / 2.0, spec.rotation_deg)

    # unrotated frame; the rim sits on a pixel centre
    x0 = float(round(sc.rim_x * f))
    yr = float(round(sc.rim_y * f))
    t = spec.ilium_thickness * f
    top = sc.ilium_top * f
    roof = (math.sin(a), -math.cos(a))  # bony roof direction from the rim, rising medially
    # outward normal of the roof edge points down-left of the roof direction
    n_roof = (math.cos(a), math.sin(a))
    left, right = x0 - 0.5, x0 + t - 0.5
    normals = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], n_roof])
    offsets = np.array([-left, right, -top, n_roof[0] * x0 + n_roof[1] * yr])
    slope = roof[1] / roof[0]
    verts = np.array([[left, top], [right, top],
                      [right, yr + (right - x0) * slope], [left, yr + (left - x0) * slope]])
    ilium = _HalfPlanes(normals, offsets, verts, rot)

    p1 = rot.point((x0, yr))
    p2 = rot.point((x0 + sc.roof_length * f * roof[0], yr + sc.roof_length * f * roof[1]))
    p3 = rot.point((x0 - sc.labrum_distance * f * math.sin(b),
                    yr + sc.labrum_distance * f * math.cos(b)))

    r_ll = float(max(2, round(sc.lower_limb_radius * f)))
    lower_limb = _Disk(float(round(p2[0])), float(round(p2[1])) + r_ll, r_ll)
    labrum = _Disk(p3[0], p3[1], sc.labrum_radius * f)
    co_c = rot.point((x0 + sc.co_offset[0] * f, yr + sc.co_offset[1] * f))
    co = _Disk(co_c[0], co_c[1], sc.co_radius * f)
    bridge = _Capsule(p1, p2, max(1.0, sc.bridge_half_width * f))
    return {
        "ilium": ilium, "lower_limb": lower_limb, "labrum": labrum, "co_junction": co,
        "bridge": bridge, "p1": p1, "p2": p2, "p3": p3,
    }


def _check_feasible(spec: PhantomSpec, lay: dict) -> None:
    pad = spec.edge_jitter_px + 2.0
    for name in ("ilium", "lower_limb", "labrum", "co_junction"):
        x0, y0, x1, y1 = lay[name].bbox()
        if name == "ilium":
            # the ilium may leave through the top edge, and only there
            y0 = pad
        if x0 - pad < 0 or y0 - pad < 0 or x1 + pad > spec.width - 1 or y1 + pad > spec.height - 1:
            raise PhantomInfeasibleError(
                f"{name} bounding box ({x0:.1f}, {y0:.1f})-({x1:.1f}, {y1:.1f}) "
                f"leaves the {spec.width}x{spec.height} canvas")


def _masks(spec: PhantomSpec, lay: dict, rng: Optional[np.random.Generator]) -> StructureSet:
    noisy = rng is not None and spec.edge_jitter_px > 0
    wl = tuple(w * spec.scale for w in spec.structure_scales.jitter_wavelength)
    margin = spec.edge_jitter_px + 1.0
    out = {}
    for name in ("flat_ilium", "lower_limb", "labrum", "co_junction"):
        key = "ilium" if name == "flat_ilium" else name
        shapes = [lay[key]]
        if name == "flat_ilium" and spec.fused_structures:
            shapes.append(lay["bridge"])
        noise = _EdgeNoise(rng, spec.edge_jitter_px, wl) if noisy else None
        mask = _rasterize(shapes, spec.width, spec.height, noise, margin)
        if rng is not None and name in spec.dropout_structures and spec.dropout_fraction > 0:
            depth = 0.35 * _inradius(lay[key])
            mask = _dropout(mask, lay[key], spec.dropout_fraction, depth, rng)
        out[name] = BinaryMask(mask)
    return StructureSet(laterality="left", **out)


def _inradius(shape: _Shape) -> float:
    if isinstance(shape, _Disk):
        return shape.r
    x0, y0, x1, y1 = shape.bbox()
    return 0.5 * min(x1 - x0, y1 - y0)


def _clip_point(x: float, y: float, spec: PhantomSpec) -> tuple[float, float]:
    return (min(max(x, 0.0), spec.width - 1.0), min(max(y, 0.0), spec.height - 1.0))


def generate(spec: PhantomSpec, scene_id: str = "phantom") -> PhantomScene:
    """Rasterize one scene.  Identical specs give bit-identical scenes."""
    lay = _layout(spec)
    _check_feasible(spec, lay)
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    truth = _masks(spec, lay, None)
    noisy = _masks(spec, lay, rng) if (spec.edge_jitter_px > 0 or spec.dropout_fraction > 0) else truth

    marks = [lay["p1"], lay["p2"], lay["p3"]]
    truth_set = LandmarkSet(*(LandmarkPoint(x, y, "predicted") for x, y in marks))
    sigma = spec.landmark_sigma
    pred = []
    for x, y in marks:
        if sigma > 0:
            dx, dy = rng.normal(0.0, sigma, size=2)
            x, y = _clip_point(x + dx, y + dy, spec)
        pred.append(LandmarkPoint(float(x), float(y), "predicted"))
    return PhantomScene(scene_id, noisy, truth, truth_set, LandmarkSet(*pred),
                        spec.alpha_true, spec.beta_true, spec)


def generate_batch(n: int, alpha_range: tuple[float, float] = (45.0, 75.0),
                   beta_range: tuple[float, float] = (35.0, 80.0), seed: int = 0,
                   template: PhantomSpec = PhantomSpec()) -> list[PhantomScene]:
    """``n`` scenes with angles drawn uniformly from the given ranges."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(n):
        alpha = float(rng.uniform(*alpha_range))
        beta = float(rng.uniform(*beta_range))
        scene_seed = int(rng.integers(0, 2 ** 63))
        spec = replace(template, alpha_true=alpha, beta_true=beta, seed=scene_seed)
        scenes.append(generate(spec, f"phantom-{i:04d}"))
    return scenes
