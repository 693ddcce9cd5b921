"""Loss kernels for training against the generated targets.

All kernels are pure and operate on plain floats / numpy arrays; reductions
over the set of object points are left to the caller (see reduce_over_points).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidRayLength

_CLAMP = 1e-7


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss split into its four parts; total is the exact sum."""

    cls: float
    reg: float
    sc: float
    ac: float
    total: float = field(init=False)

    def __post_init__(self) -> None:
        for name in ("cls", "reg", "sc", "ac"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} loss must be nonnegative")
        object.__setattr__(self, "total", self.cls + self.reg + self.sc + self.ac)


def _check_fans(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"fan sizes differ: {pred.shape[0]} vs {gt.shape[0]}")
    if (pred <= 0).any() or (gt <= 0).any():
        raise InvalidRayLength("ray lengths must be strictly positive")
    return pred, gt


def polar_iou_loss(pred, gt) -> float:
    """log of summed elementwise max over summed elementwise min.

    Zero iff pred == gt; invariant under scaling both fans by the same
    positive constant.
    """
    pred, gt = _check_fans(pred, gt)
    return float(np.log(np.maximum(pred, gt).sum() / np.minimum(pred, gt).sum()))


def polar_iou_grad(pred, gt) -> np.ndarray:
    """Analytic d(loss)/d(pred).

    An element in the max branch contributes 1/sum(max), one in the min
    branch -1/sum(min); exact ties contribute both (their net effect cancels
    when the fans are identical).
    """
    pred, gt = _check_fans(pred, gt)
    s_max = np.maximum(pred, gt).sum()
    s_min = np.minimum(pred, gt).sum()
    return (pred >= gt) / s_max - (pred <= gt) / s_min


def smooth_l1(d: float) -> float:
    """0.5*d^2 below 1, d - 0.5 above; continuous with slope 1 at the joint."""
    if d < 0:
        raise ValueError(f"smooth_l1 expects a nonnegative distance, got {d}")
    return 0.5 * d * d if d < 1.0 else d - 0.5


def aux_center_loss(pred_disp, gt_disp, norm: str = "l1") -> float:
    """Smooth-L1 penalty between predicted and target displacement magnitudes.

    norm "l1" applies smooth_l1 per component (box-regression convention);
    norm "l2" applies it to the per-quadrant euclidean distance.
    """
    pred = np.asarray(pred_disp, dtype=np.float64).reshape(4, 2)
    gt = np.asarray(gt_disp, dtype=np.float64).reshape(4, 2)
    if norm == "l1":
        return float(sum(smooth_l1(abs(d)) for d in (gt - pred).ravel()))
    if norm == "l2":
        dists = np.hypot(gt[:, 0] - pred[:, 0], gt[:, 1] - pred[:, 1])
        return float(sum(smooth_l1(d) for d in dists))
    raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")


def structure_centerness_loss(pred: float, gt: float) -> float:
    """Binary cross entropy of predicted vs optimal structure centerness."""
    if not 0.0 <= gt <= 1.0:
        raise ValueError(f"target centerness must be in [0, 1], got {gt}")
    p = min(max(pred, _CLAMP), 1.0 - _CLAMP)
    return -(gt * math.log(p) + (1.0 - gt) * math.log(1.0 - p))


def focal_loss(pred_prob: float, target: int, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Modulated cross entropy -alpha * (1 - p_t)^gamma * log(p_t)."""
    if target not in (0, 1):
        raise ValueError(f"target must be 0 or 1, got {target}")
    p = min(max(pred_prob, _CLAMP), 1.0 - _CLAMP)
    p_t = p if target == 1 else 1.0 - p
    return -alpha * (1.0 - p_t) ** gamma * math.log(p_t)


def reduce_over_points(values, reduction: str = "mean") -> float:
    """Combine per-point loss values; the normalization is configurable
    because the aggregate is defined only up to it."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        return 0.0
    if reduction == "mean":
        return float(arr.mean())
    if reduction == "sum":
        return float(arr.sum())
    raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
