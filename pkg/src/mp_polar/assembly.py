"""Contour construction from polar ray fans.

`assemble_single` connects one fan's endpoints.  `assemble_mp` stitches the
main fan and four auxiliary fans: each auxiliary fan is trimmed to the angle
window subtended by the main fan's quadrant-boundary points, and the gaps
between trimmed sequences are filled with main-fan points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDisplacement, InvalidRayCount, OutsideObject
from .geometry import (
    Point2,
    PolygonMask,
    RasterMask,
    RayFan,
    cast_rays,
    mass_center,
    rasterize,
)
from .targets import aux_targets

_TWO_PI = 2.0 * math.pi


@dataclass
class AngularPoint:
    """A contour point tagged with its angle around the main center."""

    point: Point2
    angle_main: float

    @classmethod
    def from_point(cls, point: Point2, main: Point2) -> "AngularPoint":
        ang = math.atan2(point.y - main.y, point.x - main.x) % _TWO_PI
        return cls(point, ang)


class MultiPolarMask:
    """Main ray fan plus one auxiliary fan per quadrant.

    All five fans share the same ray count and each auxiliary center must lie
    in the closed quadrant it represents, relative to the main center.
    """

    def __init__(self, main: RayFan, aux: list[RayFan]) -> None:
        if len(aux) != 4:
            raise ValueError(f"expected 4 auxiliary fans, got {len(aux)}")
        if any(f.n != main.n for f in aux):
            raise InvalidRayCount("all five fans must share the same ray count")
        signs = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
        for m, (fan, (sx, sy)) in enumerate(zip(aux, signs), start=1):
            dx = fan.center.x - main.center.x
            dy = fan.center.y - main.center.y
            if sx * dx < -1e-9 or sy * dy < -1e-9:
                raise ValueError(
                    f"auxiliary center {m} at ({fan.center.x}, {fan.center.y}) "
                    f"is outside closed quadrant {m}"
                )
        self.main = main
        self.aux = list(aux)
        self.n = main.n


def derive_aux_centers(main: Point2, disp: np.ndarray) -> list[Point2]:
    """Apply the per-quadrant sign pattern (+,+), (-,+), (-,-), (+,-) to the
    four displacement magnitude vectors."""
    disp = np.asarray(disp, dtype=np.float64).reshape(4, 2)
    if (disp < 0).any():
        raise InvalidDisplacement("displacement magnitudes must be nonnegative")
    signs = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=np.float64)
    offsets = signs * disp
    return [Point2(main.x + ox, main.y + oy) for ox, oy in offsets]


def assemble_single(fan: RayFan) -> PolygonMask:
    """Polygon connecting the fan endpoints in slot order."""
    return PolygonMask(fan.points())


def subseq(points, vertex: Point2, window: tuple[float, float]) -> np.ndarray:
    """Order-preserving filter: keep points whose angle at `vertex` lies in
    the closed window [start, end], measured counter-clockwise and allowed to
    wrap through zero."""
    pts = _as_points(points)
    ang = np.mod(np.arctan2(pts[:, 1] - vertex.y, pts[:, 0] - vertex.x), _TWO_PI)
    keep = _window_mask(ang, window[0], window[1])
    return pts[keep]


def _as_points(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points.reshape(-1, 2).astype(np.float64, copy=False)
    seq = list(points)
    if seq and isinstance(seq[0], AngularPoint):
        return np.array([[ap.point.x, ap.point.y] for ap in seq], dtype=np.float64)
    if seq and isinstance(seq[0], Point2):
        return np.array([[p.x, p.y] for p in seq], dtype=np.float64)
    return np.asarray(seq, dtype=np.float64).reshape(-1, 2)


def _window_mask(angles: np.ndarray, start: float, end: float) -> np.ndarray:
    width = (end - start) % _TWO_PI
    delta = (angles - start) % _TWO_PI
    return delta <= width


def _unwrap_into(theta: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Shift each angle by a multiple of 2*pi into [lo, hi] when possible,
    otherwise to the candidate closest to the interval midpoint."""
    cands = theta[:, None] + _TWO_PI * np.array([-1.0, 0.0, 1.0])
    mid = 0.5 * (lo + hi)
    ok = (cands >= lo) & (cands <= hi)
    dist = np.where(ok, 0.0, np.abs(cands - mid))
    return cands[np.arange(theta.shape[0]), np.argmin(dist, axis=1)]


@dataclass
class AssemblyTrace:
    """Intermediate products of assemble_mp, kept for rendering and tests."""

    fan_points: list[np.ndarray]
    refined: list[np.ndarray]
    refined_slots: list[np.ndarray]
    gaps: list[np.ndarray]
    gap_slots: list[np.ndarray]
    angle_bounds: list[tuple[float, float]]
    fallback: list[bool]


def assemble_mp(mpm: MultiPolarMask) -> PolygonMask:
    """Stitch the five fans into one contour."""
    poly, _ = assemble_mp_traced(mpm)
    return poly


def assemble_mp_traced(mpm: MultiPolarMask) -> tuple[PolygonMask, AssemblyTrace]:
    n = mpm.n
    quarter = n // 4
    main_c = mpm.main.center
    fans = [mpm.main] + mpm.aux
    pts = [f.points() for f in fans]

    # angles of every fan's points around the main center; the main fan's own
    # points sit exactly on the slot angles
    slot_angles = mpm.main.angles()
    main_angles = [slot_angles] + [
        np.mod(np.arctan2(p[:, 1] - main_c.y, p[:, 0] - main_c.x), _TWO_PI)
        for p in pts[1:]
    ]

    refined: list[np.ndarray] = []
    refined_slots: list[np.ndarray] = []
    bounds: list[tuple[float, float]] = []
    fallback_flags: list[bool] = []
    for m in range(1, 5):
        aux_c = mpm.aux[m - 1].center
        p_start = pts[0][(m - 1) * quarter]
        p_end = pts[0][(m % 4) * quarter]
        th_s = math.atan2(p_start[1] - aux_c.y, p_start[0] - aux_c.x) % _TWO_PI
        th_e = math.atan2(p_end[1] - aux_c.y, p_end[0] - aux_c.x) % _TWO_PI
        # auxiliary fan endpoints sit exactly on the slot angles at their center
        keep = _window_mask(slot_angles, th_s, th_e)
        if keep.any():
            delta = (slot_angles - th_s) % _TWO_PI
            idx = np.nonzero(keep)[0]
            idx = idx[np.argsort(delta[idx], kind="stable")]  # cyclic order from window start
            sel_pts = pts[m][idx]
            sel_ang = main_angles[m][idx]
            fb = False
        else:
            # empty window: fall back to the main fan's own quadrant arc
            idx = np.arange((m - 1) * quarter, m * quarter)
            sel_pts = pts[0][idx]
            sel_ang = slot_angles[idx]
            fb = True
        lo = (m - 2) * math.pi / 2.0
        hi = (m + 1) * math.pi / 2.0
        unwrapped = _unwrap_into(sel_ang, lo, hi)
        bounds.append((float(unwrapped.min()), float(unwrapped.max())))
        refined.append(sel_pts)
        refined_slots.append(idx)
        fallback_flags.append(fb)

    gaps: list[np.ndarray] = []
    gap_slots: list[np.ndarray] = []
    for m in range(1, 5):
        nxt = m % 4
        lower = bounds[m - 1][1]  # b_m
        upper = bounds[nxt][0] + (_TWO_PI if m == 4 else 0.0)  # a_{m+1}
        upper = min(upper, lower + _TWO_PI - 1e-12)
        if upper <= lower:
            gaps.append(np.empty((0, 2)))
            gap_slots.append(np.empty(0, dtype=np.int64))
            continue
        cands = slot_angles[:, None] + _TWO_PI * np.array([-1.0, 0.0, 1.0])
        inside = (cands > lower) & (cands < upper)
        keep = inside.any(axis=1)
        theta = np.where(inside, cands, np.inf).min(axis=1)
        idx = np.nonzero(keep)[0]
        idx = idx[np.argsort(theta[idx], kind="stable")]
        gaps.append(pts[0][idx])
        gap_slots.append(idx)

    pieces = []
    for m in range(4):
        pieces.append(refined[m])
        pieces.append(gaps[m])
    sequence = np.concatenate(pieces, axis=0)
    trace = AssemblyTrace(
        fan_points=pts,
        refined=refined,
        refined_slots=refined_slots,
        gaps=gaps,
        gap_slots=gap_slots,
        angle_bounds=bounds,
        fallback=fallback_flags,
    )
    return PolygonMask(sequence), trace


def _snap_inside(mask: RasterMask, p: Point2) -> Point2:
    """Nearest set-pixel center to p (row-major tie-break)."""
    ix, iy = int(math.floor(p.x)), int(math.floor(p.y))
    if 0 <= ix < mask.width and 0 <= iy < mask.height and mask.bits[iy, ix]:
        return p
    centers = mask.pixel_centers()
    if centers.shape[0] == 0:
        raise OutsideObject("mask has no set pixels")
    d2 = (centers[:, 0] - p.x) ** 2 + (centers[:, 1] - p.y) ** 2
    best = int(np.argmin(d2))
    return Point2(float(centers[best, 0]), float(centers[best, 1]))


def reconstruct_oracle(
    mask: PolygonMask, n: int, mode: str, raster: int = 512
) -> PolygonMask:
    """Best-case reconstruction from ground-truth-derived centers and fans.

    mode "single" uses one fan at the mass center; mode "multi" adds the four
    auxiliary fans at quadrant mass centers.  A mass center that falls
    outside the object (concave shapes) is snapped to the nearest inside
    pixel so the auxiliary targets stay defined.
    """
    if mode not in ("single", "multi"):
        raise ValueError(f"mode must be 'single' or 'multi', got {mode!r}")
    x0, y0, x1, y1 = mask.bbox
    long_side = max(x1 - x0, y1 - y0)
    if long_side <= 0:
        raise ValueError("mask bounding box is degenerate")
    s = raster / long_side
    pad = 2.0 / s
    shifted = PolygonMask((mask.vertices - [x0 - pad, y0 - pad]) * s)
    w = int(math.ceil((x1 - x0 + 2 * pad) * s))
    h = int(math.ceil((y1 - y0 + 2 * pad) * s))
    rm = rasterize(shifted, w, h)
    c_r = _snap_inside(rm, mass_center(rm))
    main = Point2(c_r.x / s + (x0 - pad), c_r.y / s + (y0 - pad))

    main_fan = cast_rays(mask, main, n)
    if mode == "single":
        return assemble_single(main_fan)

    disp = aux_targets(rm, c_r) / s
    aux_centers = derive_aux_centers(main, disp)
    aux_fans = [cast_rays(mask, c, n) for c in aux_centers]
    return assemble_mp(MultiPolarMask(main_fan, aux_fans))
