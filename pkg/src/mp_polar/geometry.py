"""Exact and raster geometry primitives.

Everything here uses the math convention: x grows right, y grows up, and
angles are measured counter-clockwise from the +x axis.  Image-style inputs
(y down) are flipped once at ingestion, never here.

Raster grids are sampled at pixel centers: pixel (i, j) covers the unit
square [i, i+1) x [j, j+1) and is represented by its center (i+0.5, j+0.5).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateGeometry,
    DimensionMismatch,
    EmptyMask,
    InvalidRayCount,
)

# Floor for ray lengths.  Rays that never meet the contour collapse to this
# value instead of zero so downstream ratio losses stay finite.
MIN_RAY_LENGTH = 1e-3

_PARALLEL_EPS = 1e-12
_SEGMENT_EPS = 1e-9


@dataclass(frozen=True)
class Point2:
    """A 2D point in pixel units."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Point2 coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)

    def offset(self, dx: float, dy: float) -> "Point2":
        return Point2(self.x + dx, self.y + dy)


def ray_angles(n: int) -> np.ndarray:
    """Directions of the n angular slots: slot i points at 2*pi*i/n."""
    _check_ray_count(n)
    return 2.0 * np.pi * np.arange(n, dtype=np.float64) / n


def _check_ray_count(n: int) -> None:
    if n < 4 or n % 4 != 0:
        raise InvalidRayCount(f"ray count must be a positive multiple of 4, got {n}")


class PolygonMask:
    """Closed polygon contour stored counter-clockwise.

    Consecutive duplicate vertices (including a repeated closing vertex) are
    dropped at construction.  Self-intersecting contours are allowed; they
    are flagged via :attr:`is_simple` and rasterize under the even-odd rule.
    """

    def __init__(self, vertices) -> None:
        arr = np.asarray(
            [(p.x, p.y) if isinstance(p, Point2) else p for p in vertices],
            dtype=np.float64,
        ).reshape(-1, 2)
        if arr.size and not np.isfinite(arr).all():
            raise DegenerateGeometry("polygon vertices must be finite")
        arr = _drop_consecutive_duplicates(arr)
        if arr.shape[0] < 3:
            raise DegenerateGeometry(f"polygon needs >= 3 distinct vertices, got {arr.shape[0]}")
        if _signed_area(arr) < 0.0:
            arr = arr[::-1]
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self.vertices = arr

    @cached_property
    def area(self) -> float:
        """Absolute shoelace area."""
        return abs(_signed_area(self.vertices))

    @cached_property
    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)."""
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return (lo[0], lo[1], hi[0], hi[1])

    @cached_property
    def is_simple(self) -> bool:
        """True when no two non-adjacent edges intersect."""
        return not _has_self_intersection(self.vertices)

    @cached_property
    def is_convex(self) -> bool:
        """True when every turn along the contour is non-clockwise."""
        v = self.vertices
        a = np.roll(v, -1, axis=0) - v
        b = np.roll(a, -1, axis=0)
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        scale = max(self.area, 1.0)
        return bool((cross >= -1e-9 * scale).all())

    def translated(self, dx: float, dy: float) -> "PolygonMask":
        return PolygonMask(self.vertices + np.array([dx, dy]))

    def scaled(self, factor: float) -> "PolygonMask":
        return PolygonMask(self.vertices * float(factor))

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def __repr__(self) -> str:
        return f"PolygonMask({len(self)} vertices, area={self.area:.2f})"


def _drop_consecutive_duplicates(arr: np.ndarray) -> np.ndarray:
    if arr.shape[0] == 0:
        return arr
    keep = np.ones(arr.shape[0], dtype=bool)
    keep[1:] = (arr[1:] != arr[:-1]).any(axis=1)
    arr = arr[keep]
    # the contour is cyclic: a closing vertex equal to the first is redundant
    while arr.shape[0] > 1 and (arr[-1] == arr[0]).all():
        arr = arr[:-1]
    return arr


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def _has_self_intersection(v: np.ndarray) -> bool:
    n = v.shape[0]
    a = v
    b = np.roll(v, -1, axis=0)
    for i in range(n - 2):
        # skip the two edges adjacent to edge i (cyclically)
        j0 = i + 2
        j1 = n if i > 0 else n - 1
        if j0 >= j1:
            continue
        if _segments_intersect_any(a[i], b[i], a[j0:j1], b[j0:j1]):
            return True
    return False


def _segments_intersect_any(p, q, a, b) -> bool:
    """True if segment pq intersects any of the segments a[k]b[k]."""
    d1 = _orient(a, b, p)
    d2 = _orient(a, b, q)
    d3 = _orient_single(p, q, a)
    d4 = _orient_single(p, q, b)
    proper = (
        ((d1 > 0) & (d2 < 0) | (d1 < 0) & (d2 > 0))
        & ((d3 > 0) & (d4 < 0) | (d3 < 0) & (d4 > 0))
    )
    if proper.any():
        return True
    touch = (
        ((np.abs(d1) < _SEGMENT_EPS) & _on_segment(a, b, p))
        | ((np.abs(d2) < _SEGMENT_EPS) & _on_segment(a, b, q))
        | ((np.abs(d3) < _SEGMENT_EPS) & _on_segment_single(p, q, a))
        | ((np.abs(d4) < _SEGMENT_EPS) & _on_segment_single(p, q, b))
    )
    return bool(touch.any())


def _orient(a, b, p) -> np.ndarray:
    return (b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (p[0] - a[:, 0])


def _orient_single(p, q, pts) -> np.ndarray:
    return (q[0] - p[0]) * (pts[:, 1] - p[1]) - (q[1] - p[1]) * (pts[:, 0] - p[0])


def _on_segment(a, b, p) -> np.ndarray:
    return (
        (np.minimum(a[:, 0], b[:, 0]) - _SEGMENT_EPS <= p[0])
        & (p[0] <= np.maximum(a[:, 0], b[:, 0]) + _SEGMENT_EPS)
        & (np.minimum(a[:, 1], b[:, 1]) - _SEGMENT_EPS <= p[1])
        & (p[1] <= np.maximum(a[:, 1], b[:, 1]) + _SEGMENT_EPS)
    )


def _on_segment_single(p, q, pts) -> np.ndarray:
    return (
        (min(p[0], q[0]) - _SEGMENT_EPS <= pts[:, 0])
        & (pts[:, 0] <= max(p[0], q[0]) + _SEGMENT_EPS)
        & (min(p[1], q[1]) - _SEGMENT_EPS <= pts[:, 1])
        & (pts[:, 1] <= max(p[1], q[1]) + _SEGMENT_EPS)
    )


class RasterMask:
    """Binary pixel grid, row-major, shape (height, width)."""

    def __init__(self, bits: np.ndarray) -> None:
        bits = np.ascontiguousarray(np.asarray(bits, dtype=bool))
        if bits.ndim != 2:
            raise DimensionMismatch(f"raster bits must be 2-D, got shape {bits.shape}")
        bits.flags.writeable = False
        self.bits = bits
        self.height, self.width = bits.shape

    @classmethod
    def empty(cls, width: int, height: int) -> "RasterMask":
        return cls(np.zeros((height, width), dtype=bool))

    @cached_property
    def count(self) -> int:
        """Number of set pixels."""
        return int(self.bits.sum())

    def pixel_centers(self) -> np.ndarray:
        """(N, 2) array of set-pixel centers (x, y)."""
        jj, ii = np.nonzero(self.bits)
        return np.stack([ii + 0.5, jj + 0.5], axis=1)

    def __repr__(self) -> str:
        return f"RasterMask({self.width}x{self.height}, {self.count} set)"


class RayFan:
    """n ray lengths anchored at a center; slot i points at angle 2*pi*i/n.

    Lengths are floored at MIN_RAY_LENGTH so every fan spans a nonzero
    star-shaped region.
    """

    def __init__(self, center: Point2, lengths) -> None:
        lengths = np.asarray(lengths, dtype=np.float64).reshape(-1)
        _check_ray_count(lengths.shape[0])
        if not np.isfinite(lengths).all():
            raise ValueError("ray lengths must be finite")
        lengths = np.maximum(lengths, MIN_RAY_LENGTH)
        lengths.flags.writeable = False
        self.center = center
        self.lengths = lengths
        self.n = lengths.shape[0]

    def angles(self) -> np.ndarray:
        return ray_angles(self.n)

    def points(self) -> np.ndarray:
        """(n, 2) endpoints center + u_k * length_k in slot order."""
        ang = self.angles()
        return np.stack(
            [
                self.center.x + np.cos(ang) * self.lengths,
                self.center.y + np.sin(ang) * self.lengths,
            ],
            axis=1,
        )

    def __repr__(self) -> str:
        return f"RayFan(n={self.n}, center=({self.center.x:.2f}, {self.center.y:.2f}))"


def cast_rays(mask: PolygonMask, center: Point2, n: int) -> RayFan:
    """Distance labels: farthest contour intersection along each of n rays.

    Directions that never meet the contour (center outside the mask along
    that ray) fall back to MIN_RAY_LENGTH.
    """
    _check_ray_count(n)
    lengths = cast_rays_many(mask, np.array([[center.x, center.y]]), n)[0]
    return RayFan(center, lengths)


def cast_rays_many(mask: PolygonMask, centers: np.ndarray, n: int) -> np.ndarray:
    """Vectorized cast_rays for a (P, 2) batch of centers; returns (P, n)."""
    _check_ray_count(n)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    if not np.isfinite(centers).all():
        raise ValueError("ray centers must be finite")
    v = mask.vertices
    a = v  # (E, 2)
    d = np.roll(v, -1, axis=0) - v  # edge direction vectors
    ang = ray_angles(n)
    u = np.stack([np.cos(ang), np.sin(ang)], axis=1)  # (n, 2)

    # Solve center + t*u = a + s*d per (center, direction, edge).
    w = a[None, :, :] - centers[:, None, :]  # (P, E, 2)
    denom = u[:, 0][None, :, None] * d[:, 1][None, None, :] - u[:, 1][None, :, None] * d[:, 0][None, None, :]
    wxd = w[:, :, 0] * d[:, 1] - w[:, :, 1] * d[:, 0]  # (P, E)
    wxu = w[:, None, :, 0] * u[None, :, 1][:, :, None] - w[:, None, :, 1] * u[None, :, 0][:, :, None]

    nonparallel = np.abs(denom) > _PARALLEL_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        t = wxd[:, None, :] / denom
        s = wxu / denom
    valid = nonparallel & (s >= -_SEGMENT_EPS) & (s <= 1.0 + _SEGMENT_EPS) & (t >= -_SEGMENT_EPS)
    t = np.where(valid, t, -np.inf)
    best = t.max(axis=2)  # (P, n)

    # Collinear overlap: the edge lies on the ray line; its endpoints project
    # onto the ray directly.
    collinear = (~nonparallel) & (np.abs(wxu) < _SEGMENT_EPS)
    if collinear.any():
        b = a + d
        ta = w[:, None, :, 0] * u[None, :, 0][:, :, None] + w[:, None, :, 1] * u[None, :, 1][:, :, None]
        wb = b[None, :, :] - centers[:, None, :]
        tb = wb[:, None, :, 0] * u[None, :, 0][:, :, None] + wb[:, None, :, 1] * u[None, :, 1][:, :, None]
        tmax = np.maximum(ta, tb)
        tmax = np.where(collinear & (tmax >= -_SEGMENT_EPS), tmax, -np.inf)
        best = np.maximum(best, tmax.max(axis=2))

    lengths = np.where(np.isfinite(best), np.maximum(best, MIN_RAY_LENGTH), MIN_RAY_LENGTH)
    return lengths


def rasterize(mask: PolygonMask, width: int, height: int) -> RasterMask:
    """Even-odd scanline fill sampled at pixel centers."""
    if width < 1 or height < 1:
        raise ValueError(f"raster dimensions must be >= 1, got {width}x{height}")
    v = mask.vertices
    ax, ay = v[:, 0], v[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    bits = np.zeros((height, width), dtype=bool)
    xs = np.arange(width, dtype=np.float64) + 0.5
    for j in range(height):
        y = j + 0.5
        crosses = (ay > y) != (by > y)
        if not crosses.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = ax[crosses] + (y - ay[crosses]) * (bx[crosses] - ax[crosses]) / (by[crosses] - ay[crosses])
        xi.sort()
        # a pixel center is inside iff an odd number of crossings lie left of it
        bits[j] = (np.searchsorted(xi, xs, side="left") % 2) == 1
    return RasterMask(bits)


def mask_iou(a: RasterMask, b: RasterMask) -> float:
    """Intersection over union of two equally sized rasters; 1.0 if both empty."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"raster shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    inter = int((a.bits & b.bits).sum())
    union = int((a.bits | b.bits).sum())
    if union == 0:
        return 1.0
    return inter / union


def mass_center(mask: RasterMask) -> Point2:
    """Arithmetic mean of set-pixel centers."""
    if mask.count == 0:
        raise EmptyMask("mass center of an empty raster is undefined")
    jj, ii = np.nonzero(mask.bits)
    return Point2(float(ii.mean() + 0.5), float(jj.mean() + 0.5))


def quadrant_index(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Quadrant (1..4) of offsets (dx, dy), with deterministic axis ties.

    Ties: dx == 0 goes with the sign of dy on the positive-x side (Q1/Q4),
    dy == 0 goes with the sign of dx on the positive-y side (Q1/Q2), and the
    origin itself lands in Q1.
    """
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    q = np.select(
        [
            (dx > 0) & (dy > 0),
            (dx < 0) & (dy > 0),
            (dx < 0) & (dy < 0),
            (dx > 0) & (dy < 0),
            (dx == 0) & (dy > 0),
            (dx == 0) & (dy < 0),
            (dy == 0) & (dx > 0),
            (dy == 0) & (dx < 0),
        ],
        [1, 2, 3, 4, 1, 4, 1, 2],
        default=1,
    )
    return q


def quadrant_clip(mask: RasterMask, origin: Point2, m: int) -> RasterMask:
    """Set pixels whose center falls in quadrant m relative to origin.

    The four results partition the set pixels exactly; axis ties follow
    :func:`quadrant_index`.
    """
    if m not in (1, 2, 3, 4):
        raise ValueError(f"quadrant must be 1..4, got {m}")
    jj, ii = np.nonzero(mask.bits)
    q = quadrant_index(ii + 0.5 - origin.x, jj + 0.5 - origin.y)
    bits = np.zeros_like(mask.bits)
    sel = q == m
    bits[jj[sel], ii[sel]] = True
    return RasterMask(bits)


def raster_ray_lengths(
    mask: RasterMask, origin: Point2, n: int, step: float = 0.25
) -> np.ndarray:
    """Farthest inside-mask sample distance along each of n rays.

    Marches the grid at `step` pixels; directions with no inside sample fall
    back to MIN_RAY_LENGTH.  This is the raster analogue of cast_rays.
    """
    _check_ray_count(n)
    corners = np.array(
        [[0.0, 0.0], [mask.width, 0.0], [0.0, mask.height], [mask.width, mask.height]]
    )
    tmax = float(np.hypot(corners[:, 0] - origin.x, corners[:, 1] - origin.y).max())
    if tmax <= step:
        return np.full(n, MIN_RAY_LENGTH)
    ts = np.arange(step, tmax + step, step)
    ang = ray_angles(n)
    px = origin.x + np.cos(ang)[:, None] * ts[None, :]
    py = origin.y + np.sin(ang)[:, None] * ts[None, :]
    ix = np.floor(px).astype(np.int64)
    iy = np.floor(py).astype(np.int64)
    valid = (ix >= 0) & (ix < mask.width) & (iy >= 0) & (iy < mask.height)
    inside = np.zeros_like(valid)
    inside[valid] = mask.bits[iy[valid], ix[valid]]
    any_inside = inside.any(axis=1)
    last = inside.shape[1] - 1 - np.argmax(inside[:, ::-1], axis=1)
    lengths = np.where(any_inside, ts[last], MIN_RAY_LENGTH)
    return np.maximum(lengths, MIN_RAY_LENGTH)


def polygon_iou(a: PolygonMask, b: PolygonMask, resolution: int = 512) -> float:
    """Rasterized IoU of two polygons on a shared grid.

    The grid covers the union of both bounding boxes with its long side
    scaled to `resolution` pixels.
    """
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    x0, y0 = min(ax0, bx0) - 1.0, min(ay0, by0) - 1.0
    x1, y1 = max(ax1, bx1) + 1.0, max(ay1, by1) + 1.0
    long_side = max(x1 - x0, y1 - y0)
    if long_side <= 0:
        return 1.0
    s = resolution / long_side
    w = max(1, int(math.ceil((x1 - x0) * s)))
    h = max(1, int(math.ceil((y1 - y0) * s)))
    ra = rasterize(PolygonMask((a.vertices - [x0, y0]) * s), w, h)
    rb = rasterize(PolygonMask((b.vertices - [x0, y0]) * s), w, h)
    return mask_iou(ra, rb)
