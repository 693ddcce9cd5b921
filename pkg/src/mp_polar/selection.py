"""Prediction-side decoding: score fusion, top-K extraction, mask NMS.

Head grids are indexed [j, i] = [row, column] with pixel (i, j) anchored at
its center (i + 0.5, j + 0.5) in the math convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import (
    Point2,
    PolygonMask,
    RasterMask,
    RayFan,
    mask_iou,
    rasterize,
)
from .assembly import MultiPolarMask, assemble_mp, derive_aux_centers


class HeadOutputs:
    """Predicted grids: class scores C, centerness P, rays M, displacements A."""

    def __init__(self, class_scores, centerness, rays, aux_disp) -> None:
        self.class_scores = np.asarray(class_scores, dtype=np.float64)
        self.centerness = np.asarray(centerness, dtype=np.float64)
        self.rays = np.asarray(rays, dtype=np.float64)
        self.aux_disp = np.asarray(aux_disp, dtype=np.float64)
        if self.class_scores.ndim != 3:
            raise DimensionMismatch("class_scores must be (height, width, classes)")
        h, w, _ = self.class_scores.shape
        if self.centerness.shape != (h, w):
            raise DimensionMismatch("centerness grid does not match class_scores")
        if self.rays.ndim != 3 or self.rays.shape[:2] != (h, w):
            raise DimensionMismatch("rays grid does not match class_scores")
        if self.aux_disp.shape[:3] != (4, h, w) or self.aux_disp.shape[3:] != (2,):
            raise DimensionMismatch("aux_disp must be (4, height, width, 2)")
        self.height, self.width = h, w
        self.num_classes = self.class_scores.shape[2]
        self.n = self.rays.shape[2]


@dataclass
class Candidate:
    center: Point2
    class_id: int
    score: float
    mask: PolygonMask


def fuse_scores(outputs: HeadOutputs) -> np.ndarray:
    """Per-class confidence: class score times centerness, (h, w, k)."""
    return outputs.class_scores * outputs.centerness[:, :, None]


def top_k(fused: np.ndarray, k_max: int, threshold: float) -> list[tuple[Point2, int, float]]:
    """Highest-scoring grid cells at or above threshold, descending.

    Ties break row-major: smaller row j, then smaller column i, then class.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    fused = np.asarray(fused, dtype=np.float64)
    jj, ii, cc = np.nonzero(fused >= threshold)
    if jj.size == 0:
        return []
    scores = fused[jj, ii, cc]
    order = np.lexsort((cc, ii, jj, -scores))[:k_max]
    return [
        (Point2(ii[o] + 0.5, jj[o] + 0.5), int(cc[o]), float(scores[o]))
        for o in order
    ]


def _common_window(masks: list[PolygonMask], grid: int) -> tuple[float, float, float, int, int]:
    x0 = min(m.bbox[0] for m in masks) - 1.0
    y0 = min(m.bbox[1] for m in masks) - 1.0
    x1 = max(m.bbox[2] for m in masks) + 1.0
    y1 = max(m.bbox[3] for m in masks) + 1.0
    s = grid / max(x1 - x0, y1 - y0)
    w = max(1, int(math.ceil((x1 - x0) * s)))
    h = max(1, int(math.ceil((y1 - y0) * s)))
    return x0, y0, s, w, h


def mask_nms(cands: list[Candidate], iou_thr: float, grid: int = 256) -> list[Candidate]:
    """Greedy suppression: walk candidates by descending score and drop any
    whose rasterized-mask IoU with an already kept candidate reaches iou_thr."""
    if not 0.0 < iou_thr <= 1.0:
        raise ValueError(f"iou_thr must be in (0, 1], got {iou_thr}")
    if not cands:
        return []
    order = sorted(range(len(cands)), key=lambda k: (-cands[k].score, k))
    x0, y0, s, w, h = _common_window([c.mask for c in cands], grid)
    rasters = [
        rasterize(PolygonMask((c.mask.vertices - [x0, y0]) * s), w, h) for c in cands
    ]
    kept: list[int] = []
    for k in order:
        if all(mask_iou(rasters[k], rasters[j]) < iou_thr for j in kept):
            kept.append(k)
    kept.sort()  # preserve relative input order among survivors
    return [cands[k] for k in kept]


def _fan_at(outputs: HeadOutputs, p: Point2) -> RayFan:
    """Snap p to its grid cell and read the ray lengths stored there."""
    i = min(max(int(math.floor(p.x)), 0), outputs.width - 1)
    j = min(max(int(math.floor(p.y)), 0), outputs.height - 1)
    return RayFan(Point2(i + 0.5, j + 0.5), outputs.rays[j, i])


def decode_candidates(
    outputs: HeadOutputs,
    k_max: int = 1000,
    threshold: float = 0.05,
    iou_thr: float = 0.5,
    nms_grid: int = 256,
) -> list[Candidate]:
    """Full decode: fuse scores, pick centers, assemble a mask per center,
    then apply mask NMS."""
    fused = fuse_scores(outputs)
    picks = top_k(fused, k_max, threshold)
    cands: list[Candidate] = []
    for center, class_id, score in picks:
        main_fan = _fan_at(outputs, center)
        i = int(main_fan.center.x)
        j = int(main_fan.center.y)
        disp = np.abs(outputs.aux_disp[:, j, i, :])
        aux_centers = derive_aux_centers(main_fan.center, disp)
        aux_fans = [_fan_at(outputs, c) for c in aux_centers]
        # clamp snapped fans back into their closed quadrants: a lookup at the
        # grid edge may not move past the main center, so reuse it directly
        mask = assemble_mp(MultiPolarMask(main_fan, aux_fans))
        cands.append(Candidate(main_fan.center, class_id, score, mask))
    return mask_nms(cands, iou_thr, grid=nms_grid)
