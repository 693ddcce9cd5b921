"""Ground-truth target generation for the multi-point polar representation.

Per candidate point this produces the distance labels (ray fans), the
structure-centerness score built from quadrant-averaged IoUs, and the four
auxiliary displacement magnitudes toward quadrant mass centers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, EmptyQuadrant, OutsideObject
from .geometry import (
    MIN_RAY_LENGTH,
    Point2,
    PolygonMask,
    RasterMask,
    RayFan,
    cast_rays_many,
    mask_iou,
    mass_center,
    quadrant_clip,
    quadrant_index,
    raster_ray_lengths,
    rasterize,
    ray_angles,
)

_AXIS_EPS = 1e-9


@dataclass
class QuadrantContour:
    """Axis-clipped ray contour for one quadrant."""

    quadrant: int
    contour: PolygonMask


def polar_centerness(fan: RayFan) -> float:
    """sqrt(min/max) of the fan's ray lengths; 1.0 means a perfectly even fan."""
    lengths = fan.lengths
    return float(math.sqrt(lengths.min() / lengths.max()))


def _require_inside(mask: RasterMask, origin: Point2) -> None:
    ix, iy = int(math.floor(origin.x)), int(math.floor(origin.y))
    if not (0 <= ix < mask.width and 0 <= iy < mask.height) or not mask.bits[iy, ix]:
        raise OutsideObject(f"origin ({origin.x}, {origin.y}) is not on a set pixel")


def aux_targets(mask: RasterMask, origin: Point2) -> np.ndarray:
    """(4, 2) displacement magnitudes from origin to each quadrant mass center.

    Magnitudes are stored componentwise nonnegative; the quadrant index
    carries the sign.  Empty quadrants contribute (0, 0).
    """
    _require_inside(mask, origin)
    out = np.zeros((4, 2), dtype=np.float64)
    for m in (1, 2, 3, 4):
        sub = quadrant_clip(mask, origin, m)
        if sub.count == 0:
            continue
        c = mass_center(sub)
        out[m - 1, 0] = abs(c.x - origin.x)
        out[m - 1, 1] = abs(c.y - origin.y)
    return out


def _axis_clip_lengths(
    start: Point2, origin: Point2, lengths: np.ndarray, n: int
) -> np.ndarray:
    """Shorten each ray at its first crossing of the axes through origin."""
    ang = ray_angles(n)
    cos, sin = np.cos(ang), np.sin(ang)
    t_clip = np.full(n, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = (origin.x - start.x) / cos
        ty = (origin.y - start.y) / sin
    tx = np.where((np.abs(cos) > _AXIS_EPS) & (tx > _AXIS_EPS), tx, np.inf)
    ty = np.where((np.abs(sin) > _AXIS_EPS) & (ty > _AXIS_EPS), ty, np.inf)
    t_clip = np.minimum(tx, ty)
    return np.minimum(lengths, t_clip)


def quadrant_contour(
    mask: RasterMask, origin: Point2, m: int, n: int, step: float = 0.25
) -> QuadrantContour:
    """Contour of n rays from the quadrant mass center, clipped at the axes.

    Rays are cast against the full object raster; each ends at its first
    crossing of the partition axes x=origin.x / y=origin.y, if any.
    """
    sub = quadrant_clip(mask, origin, m)
    if sub.count == 0:
        raise EmptyQuadrant(f"quadrant {m} relative to ({origin.x}, {origin.y}) is empty")
    cm = mass_center(sub)
    lengths = raster_ray_lengths(mask, cm, n, step=step)
    lengths = _axis_clip_lengths(cm, origin, lengths, n)
    ang = ray_angles(n)
    pts = np.stack(
        [cm.x + np.cos(ang) * lengths, cm.y + np.sin(ang) * lengths], axis=1
    )
    return QuadrantContour(m, PolygonMask(pts))


def _scaled_window(mask: RasterMask, grid: int) -> tuple[int, int, int, int, float]:
    """Set-pixel window (x0, y0, w, h) and scale capping its long side at grid."""
    jj, ii = np.nonzero(mask.bits)
    x0 = max(int(ii.min()) - 2, 0)
    y0 = max(int(jj.min()) - 2, 0)
    x1 = min(int(ii.max()) + 3, mask.width)
    y1 = min(int(jj.max()) + 3, mask.height)
    long_side = max(x1 - x0, y1 - y0)
    s = min(1.0, grid / long_side)
    return x0, y0, x1 - x0, y1 - y0, s


def _window_bits(mask: RasterMask, x0: int, y0: int, w: int, h: int, s: float) -> RasterMask:
    sub = mask.bits[y0 : y0 + h, x0 : x0 + w]
    if s == 1.0:
        return RasterMask(sub)
    w2 = max(1, int(round(w * s)))
    h2 = max(1, int(round(h * s)))
    ix = np.minimum(((np.arange(w2) + 0.5) / s).astype(np.int64), w - 1)
    iy = np.minimum(((np.arange(h2) + 0.5) / s).astype(np.int64), h - 1)
    return RasterMask(sub[np.ix_(iy, ix)])


def structure_centerness(
    mask: RasterMask, origin: Point2, n: int, grid: int = 256
) -> float:
    """Quadrant-averaged IoU between axis-clipped ray contours and the true
    quadrant masks.

    Empty quadrants score 1 (both sides agree there is nothing there).  The
    comparison runs on the object window with its long side capped at `grid`
    pixels.
    """
    _require_inside(mask, origin)
    x0, y0, w, h, s = _scaled_window(mask, grid)
    total = 0.0
    for m in (1, 2, 3, 4):
        sub = quadrant_clip(mask, origin, m)
        if sub.count == 0:
            total += 1.0
            continue
        gt = _window_bits(sub, x0, y0, w, h, s)
        try:
            qc = quadrant_contour(mask, origin, m, n)
            shifted = (qc.contour.vertices - [x0, y0]) * s
            pred = rasterize(PolygonMask(shifted), gt.width, gt.height)
        except DegenerateGeometry:
            pred = RasterMask.empty(gt.width, gt.height)
        total += mask_iou(pred, gt)
    return total / 4.0


@dataclass
class TargetMaps:
    """Per-pixel ground-truth grids over a width x height image.

    Grids are populated exactly where `inside` is true (and, when built with
    a stride, only on the stride lattice); elsewhere they hold NaN and the
    class grid holds -1.
    """

    width: int
    height: int
    n: int
    inside: np.ndarray = field(repr=False)
    class_id: np.ndarray = field(repr=False)
    rays: np.ndarray = field(repr=False)
    structure_centerness: np.ndarray = field(repr=False)
    aux_disp: np.ndarray = field(repr=False)

    def fan_at(self, i: int, j: int) -> RayFan | None:
        if not self.inside[j, i] or not np.isfinite(self.rays[j, i]).all():
            return None
        return RayFan(Point2(i + 0.5, j + 0.5), self.rays[j, i])

    @property
    def inside_count(self) -> int:
        return int(self.inside.sum())


def build_target_maps(
    instances: list[tuple[PolygonMask, int]],
    width: int,
    height: int,
    n: int,
    stride: int = 1,
    grid: int = 256,
) -> TargetMaps:
    """Generate distance labels, structure centerness, and auxiliary
    displacement targets for every inside pixel.

    Pixels covered by several instances go to the smallest-area instance.
    """
    inside = np.zeros((height, width), dtype=bool)
    class_grid = np.full((height, width), -1, dtype=np.int64)
    rays = np.full((height, width, n), np.nan)
    sc = np.full((height, width), np.nan)
    aux = np.full((4, height, width, 2), np.nan)

    if instances:
        rasters = [rasterize(poly, width, height) for poly, _ in instances]
        order = sorted(range(len(instances)), key=lambda k: (rasters[k].count, k))
        owner = np.full((height, width), -1, dtype=np.int64)
        for k in reversed(order):  # smallest-area instance wins, so paint it last
            owner[rasters[k].bits] = k
        inside = owner >= 0

        lattice = np.zeros_like(inside)
        lattice[::stride, ::stride] = True

        for k, (poly, cls) in enumerate(instances):
            class_grid[owner == k] = cls
            sel = (owner == k) & lattice
            jj, ii = np.nonzero(sel)
            if jj.size == 0:
                continue
            centers = np.stack([ii + 0.5, jj + 0.5], axis=1)
            fans = cast_rays_many(poly, centers, n)
            rays[jj, ii] = fans
            rm = rasters[k]
            for x, y in zip(ii, jj):
                origin = Point2(x + 0.5, y + 0.5)
                sc[y, x] = structure_centerness(rm, origin, n, grid=grid)
                aux[:, y, x, :] = aux_targets(rm, origin)

    return TargetMaps(
        width=width,
        height=height,
        n=n,
        inside=inside,
        class_id=class_grid,
        rays=rays,
        structure_centerness=sc,
        aux_disp=aux,
    )
