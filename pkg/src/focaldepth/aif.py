"""Laplacian focus measure, all-in-focus compositing and argmax depth from focus."""

from __future__ import annotations

import numpy as np

from .imaging import DimensionError, convolve2d, gaussian_kernel, laplacian_kernel, luma
from .optics import FocusSchedule
from .render import FocalStack


def focus_measure(stack: FocalStack, window_sigma: float = 2.0) -> np.ndarray:
    """Per-slice sharpness as an (H, W, S) volume.

    Each slice is reduced to luma, filtered with the 4-neighbour Laplacian,
    rectified, then averaged with a Gaussian window (``window_sigma = 0``
    skips the averaging).
    """
    if len(stack) == 0:
        raise ValueError("empty focal stack")
    if window_sigma < 0:
        raise ValueError("window_sigma must be non-negative")
    lap = laplacian_kernel()
    window = gaussian_kernel(window_sigma) if window_sigma > 0 else None
    planes = []
    for sl in stack.slices:
        m = np.abs(convolve2d(luma(sl), lap))
        if window is not None:
            m = convolve2d(m, window)
        planes.append(m)
    # smoothing of a non-negative field can leave -0.0/rounding dust
    return np.maximum(np.stack(planes, axis=-1), 0.0)


def _check_volume(stack: FocalStack, fv: np.ndarray):
    if fv.shape != stack.shape[:2] + (len(stack),):
        raise DimensionError(f"focus volume {fv.shape} does not match stack {stack.slices.shape}")


def composite_aif(stack: FocalStack, fv: np.ndarray, mode: str = "argmax", tau: float | None = None) -> np.ndarray:
    """Fuse the sharpest content of every slice into one image.

    ``argmax`` picks, per pixel, the slice with the largest measure (ties go
    to the lower index, as ``np.argmax`` does). ``softmax`` blends slices
    with weights ``softmax(fv / tau)``.
    """
    _check_volume(stack, fv)
    if mode == "argmax":
        best = np.argmax(fv, axis=-1)
        h, w = best.shape
        return stack.slices[best, np.arange(h)[:, None], np.arange(w)[None, :]]
    if mode == "softmax":
        if tau is None or tau <= 0:
            raise ValueError("softmax compositing needs tau > 0")
        z = fv / tau
        z = z - z.max(axis=-1, keepdims=True)
        wts = np.exp(z)
        wts /= wts.sum(axis=-1, keepdims=True)
        return np.einsum("hws,shwc->hwc", wts, stack.slices)
    raise ValueError(f"unknown compositing mode {mode!r}")


def dff_argmax_depth(fv: np.ndarray, schedule: FocusSchedule) -> np.ndarray:
    """Depth of the sharpest slice per pixel; lower index wins ties."""
    if fv.ndim != 3 or fv.shape[2] != len(schedule):
        raise DimensionError(f"focus volume {fv.shape} has no slice axis matching {len(schedule)} distances")
    return np.asarray(schedule.distances)[np.argmax(fv, axis=-1)]
