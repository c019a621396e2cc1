"""Depth accuracy metrics: RMSE and threshold (delta) accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import DimensionError


def _masked(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape:
        raise DimensionError("mask does not match depth maps")
    if not mask.any():
        raise ValueError("mask selects no pixels")
    return pred[mask], gt[mask]


def interior_mask(shape, margin: int, depth=None) -> np.ndarray:
    """Pixels at least ``margin`` away from every border.

    With ``depth`` given, pixels whose ``margin`` neighbourhood (Chebyshev)
    straddles a depth discontinuity are dropped too.
    """
    h, w = shape[:2]
    mask = np.zeros((h, w), dtype=bool)
    if 2 * margin < h and 2 * margin < w:
        mask[margin : h - margin, margin : w - margin] = True
    if depth is not None and margin > 0:
        size = 2 * margin + 1
        depth = np.asarray(depth, dtype=np.float64)
        flat = ndimage.maximum_filter(depth, size, mode="nearest") == ndimage.minimum_filter(depth, size, mode="nearest")
        mask &= flat
    return mask


def rmse(pred, gt, mask=None) -> float:
    p, g = _masked(pred, gt, mask)
    return float(np.sqrt(np.mean((p - g) ** 2)))


def delta_ratio(pred, gt, mask=None) -> np.ndarray:
    p, g = _masked(pred, gt, mask)
    if np.any(p <= 0) or np.any(g <= 0):
        raise ValueError("delta accuracy needs strictly positive depths")
    return np.maximum(p / g, g / p)


def delta_accuracy(pred, gt, mask=None, k: int = 1) -> float:
    """Fraction of pixels with max(pred/gt, gt/pred) < 1.25**k."""
    return float(np.mean(delta_ratio(pred, gt, mask) < 1.25**k))


@dataclass
class MetricsReport:
    label: str
    rmse: float
    delta1: float
    delta2: float
    delta3: float
    pixels: int
    scene: str = "all"

    def row(self):
        return (self.label, self.scene, repr(self.rmse), repr(self.delta1), repr(self.delta2), repr(self.delta3), self.pixels)


REPORT_HEADER = ("method", "scene", "rmse_m", "delta1", "delta2", "delta3", "pixels")


def evaluate(pred, gt, mask=None, label: str = "", scene: str = "all") -> MetricsReport:
    p, g = _masked(pred, gt, mask)
    return report_from_pixels(p, g, label, scene)


def report_from_pixels(p, g, label, scene="all") -> MetricsReport:
    ratio = np.maximum(p / g, g / p)
    return MetricsReport(
        label=label,
        rmse=float(np.sqrt(np.mean((p - g) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        pixels=int(p.size),
        scene=scene,
    )
