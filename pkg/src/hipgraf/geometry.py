"""Pixel-grid geometry: contours, components, hull tangents, lines and angles.

Coordinates are ``(x, y)`` pixel centres, origin top-left, y pointing down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import DegenerateGeometryError, EmptyInputError, TangentUndefinedError
from .imgio import BinaryMask

EIGHT = np.ones((3, 3), dtype=bool)

# Moore neighbourhood, clockwise as displayed (y down), starting east.
_DIRS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
_DIR_INDEX = {d: i for i, d in enumerate(_DIRS)}


@dataclass(frozen=True)
class Contour:
    points: tuple[tuple[float, float], ...]
    closed: bool = True

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float).reshape(-1, 2)

    def signed_area(self) -> float:
        """Shoelace area in (x, y) pixel coordinates.

        Negative for loops that run counter-clockwise on screen.
        """
        pts = self.as_array()
        x, y = pts[:, 0], pts[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class Line2D:
    point: tuple[float, float]
    direction: tuple[float, float]

    def __post_init__(self) -> None:
        dx, dy = self.direction
        if not all(math.isfinite(v) for v in (*self.point, dx, dy)):
            raise DegenerateGeometryError("line has non-finite components")
        if abs(math.hypot(dx, dy) - 1.0) > 1e-9:
            raise DegenerateGeometryError(f"direction {self.direction} is not unit length")

    @classmethod
    def through(cls, p: Sequence[float], q: Sequence[float]) -> "Line2D":
        dx, dy = float(q[0]) - float(p[0]), float(q[1]) - float(p[1])
        n = math.hypot(dx, dy)
        if n == 0.0:
            raise DegenerateGeometryError("cannot build a line through coincident points")
        return cls((float(p[0]), float(p[1])), (dx / n, dy / n))

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Signed perpendicular distance; positive to the right of the direction (y down)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        dx, dy = self.direction
        rel = pts - np.asarray(self.point)
        return rel[:, 0] * dy - rel[:, 1] * dx

    def distance(self, p: Sequence[float]) -> float:
        return float(abs(self.signed_distance(np.asarray(p, dtype=float))[0]))


# -- components ----------------------------------------------------------------

def label_components(mask: BinaryMask) -> tuple[np.ndarray, list[int]]:
    """Label 8-connected components.

    Returns the label image and the labels ordered by descending area, ties
    broken by the first foreground pixel in row-major order.
    """
    labels, n = ndimage.label(mask.data, structure=EIGHT)
    if n == 0:
        return labels, []
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=n + 1)
    fg = np.flatnonzero(flat)
    # first row-major index of each label
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat[fg], fg)
    order = sorted(range(1, n + 1), key=lambda k: (-int(areas[k]), int(first[k])))
    return labels, order


def largest_component(mask: BinaryMask) -> BinaryMask:
    if mask.is_empty:
        raise EmptyInputError("largest_component on an empty mask")
    labels, order = label_components(mask)
    return BinaryMask(labels == order[0])


# -- contour tracing -------------------------------------------------------------

def _trace(component: np.ndarray) -> list[tuple[float, float]]:
    """Moore-neighbour trace of one 8-connected component's outer boundary."""
    h, w = component.shape
    ys, xs = np.nonzero(component)
    start = (int(xs[0]), int(ys[0]))  # first pixel in row-major order

    def fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(component[y, x])

    def step(p: tuple[int, int], back: int) -> tuple[tuple[int, int], int] | None:
        for k in range(1, 9):
            d = (back + k) % 8
            q = (p[0] + _DIRS[d][0], p[1] + _DIRS[d][1])
            if fg(*q):
                prev = (back + k - 1) % 8
                b = (p[0] + _DIRS[prev][0], p[1] + _DIRS[prev][1])
                return q, _DIR_INDEX[(b[0] - q[0], b[1] - q[1])]
        return None

    # West of the first row-major pixel is always background.
    first = step(start, 4)
    if first is None:
        return [(float(start[0]), float(start[1]))]
    path = [start]
    p, back = first
    while True:
        if p == start:
            nxt = step(p, back)
            if nxt is not None and nxt[0] == first[0]:
                break
        path.append(p)
        p, back = step(p, back)  # type: ignore[misc]
    # Trace ran clockwise on screen; emit counter-clockwise starting at ``start``.
    ccw = [path[0]] + path[:0:-1]
    return [(float(x), float(y)) for x, y in ccw]


def extract_contours(mask: BinaryMask) -> list[Contour]:
    """One closed outer contour per 8-connected component, largest first."""
    if mask.is_empty:
        raise EmptyInputError("extract_contours on an empty mask")
    labels, order = label_components(mask)
    return [Contour(tuple(_trace(labels == k)), closed=True) for k in order]


# -- convex hull and tangents -------------------------------------------------------

def _cross(o: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable[Sequence[float]]) -> list[tuple[float, float]]:
    """Monotone-chain hull without collinear vertices."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return pts
    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def point_strictly_inside_hull(hull: Sequence[tuple[float, float]], p: Sequence[float],
                               tol: float = 1e-9) -> bool:
    if len(hull) < 3:
        return False
    n = len(hull)
    crosses = [_cross(hull[i], hull[(i + 1) % n], p) for i in range(n)]
    return all(c > tol for c in crosses) or all(c < -tol for c in crosses)


def tangent_from_point(contour: Contour | Sequence[Sequence[float]], p: Sequence[float],
                       side: str = "clockwise") -> Line2D:
    """Supporting line of the contour's convex hull through an external point.

    Directions from ``p`` to the hull vertices are measured as image-frame
    polar angles (``atan2(dy, dx)`` with y down, so increasing angle turns
    clockwise on screen).  ``"clockwise"`` picks the vertex with the largest
    angle, ``"counterclockwise"`` the smallest.
    """
    if side not in ("clockwise", "counterclockwise"):
        raise ValueError(f"side must be 'clockwise' or 'counterclockwise', got {side!r}")
    pts = contour.as_array() if isinstance(contour, Contour) else np.asarray(contour, float)
    hull = convex_hull(pts)
    px, py = float(p[0]), float(p[1])
    if point_strictly_inside_hull(hull, (px, py)):
        raise TangentUndefinedError(f"point ({px:.3f}, {py:.3f}) lies inside the hull")

    verts = np.array([v for v in hull if (v[0], v[1]) != (px, py)], dtype=float)
    if len(verts) == 0:
        raise DegenerateGeometryError("hull collapses onto the query point")
    rel = verts - (px, py)
    ref = rel.mean(axis=0)
    if np.hypot(*ref) < 1e-12:
        ref = rel[0]
    # polar angle of each vertex relative to the hull's mean direction
    ang = np.arctan2(ref[0] * rel[:, 1] - ref[1] * rel[:, 0], rel @ ref)
    k = int(np.argmax(ang)) if side == "clockwise" else int(np.argmin(ang))
    # among (near-)collinear candidates take the nearest vertex
    cand = np.flatnonzero(np.abs(ang - ang[k]) <= 1e-12)
    k = int(cand[np.argmin(np.hypot(rel[cand, 0], rel[cand, 1]))])
    return Line2D.through((px, py), verts[k])


# -- lines and angles -----------------------------------------------------------

def canonical_direction(dx: float, dy: float) -> tuple[float, float]:
    """Unit direction with a fixed sign: dx > 0, or dx == 0 and dy > 0."""
    n = math.hypot(dx, dy)
    dx, dy = dx / n, dy / n
    if dx < 0 or (dx == 0 and dy < 0):
        dx, dy = -dx, -dy
    return dx + 0.0, dy + 0.0


def fit_line_tls(points: Iterable[Sequence[float]]) -> Line2D:
    """Orthogonal-regression line through the centroid along the principal axis."""
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise DegenerateGeometryError("need at least two points for a line")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scatter = centered.T @ centered
    if np.trace(scatter) <= 1e-18:
        raise DegenerateGeometryError("all points coincide")
    evals, evecs = np.linalg.eigh(scatter)
    d = evecs[:, int(np.argmax(evals))]
    return Line2D((float(centroid[0]), float(centroid[1])), canonical_direction(d[0], d[1]))


def angle_between(l1: Line2D, l2: Line2D) -> float:
    """Acute angle between two undirected lines, in degrees within [0, 90]."""
    a, b = l1.direction, l2.direction
    dot = abs(a[0] * b[0] + a[1] * b[1])
    cross = abs(a[0] * b[1] - a[1] * b[0])
    return math.degrees(math.atan2(cross, dot))
