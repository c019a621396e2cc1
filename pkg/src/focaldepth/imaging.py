"""Image and depth-map value checks, convolution kernels and 2-D convolution.

Images are float64 arrays of shape (H, W, C) with C in {1, 3}; depth maps are
float64 arrays of shape (H, W) in meters. Everything numeric stays in float64;
quantization only happens in :mod:`focaldepth.io`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

D_MIN = 0.7
D_MAX = 10.0

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class DimensionError(ValueError):
    """Array shapes are incompatible for the requested operation."""


@dataclass(frozen=True)
class DepthRange:
    d_min: float = D_MIN
    d_max: float = D_MAX

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max) or not np.isfinite(self.d_max):
            raise ValueError(f"invalid depth range [{self.d_min}, {self.d_max}]")

    @property
    def q_min(self) -> float:
        return 1.0 / self.d_max

    @property
    def q_max(self) -> float:
        return 1.0 / self.d_min


def as_image(data) -> np.ndarray:
    """Return ``data`` as a validated (H, W, C) float64 image.

    2-D input is promoted to a single channel.
    """
    img = np.asarray(data, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise DimensionError(f"image must be 2-D or 3-D, got shape {img.shape}")
    h, w, c = img.shape
    if h < 1 or w < 1:
        raise DimensionError(f"empty image of shape {img.shape}")
    if c not in (1, 3):
        raise DimensionError(f"image must have 1 or 3 channels, got {c}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def as_depth(data, depth_range: DepthRange | None = None) -> np.ndarray:
    """Return ``data`` as a validated (H, W) float64 depth map in meters."""
    depth = np.asarray(data, dtype=np.float64)
    if depth.ndim == 3 and depth.shape[2] == 1:
        depth = depth[:, :, 0]
    if depth.ndim != 2 or depth.size == 0:
        raise DimensionError(f"depth map must be 2-D and non-empty, got shape {depth.shape}")
    if not np.all(np.isfinite(depth)):
        raise ValueError("depth map contains non-finite values")
    if depth_range is not None:
        lo, hi = depth.min(), depth.max()
        if lo < depth_range.d_min or hi > depth_range.d_max:
            raise ValueError(
                f"depth values [{lo:.4g}, {hi:.4g}] outside "
                f"[{depth_range.d_min}, {depth_range.d_max}]"
            )
    return depth


def luma(img: np.ndarray) -> np.ndarray:
    """Single-channel (H, W) intensity; RGB is weighted 0.299/0.587/0.114."""
    img = as_image(img)
    if img.shape[2] == 1:
        return img[:, :, 0].copy()
    return img @ LUMA_WEIGHTS


# Kernels are plain square float64 arrays of odd side 2*radius + 1.


def kernel_radius(k: np.ndarray) -> int:
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 != 1:
        raise DimensionError(f"kernel must be square with odd side, got {k.shape}")
    return k.shape[0] // 2


def identity_kernel() -> np.ndarray:
    return np.ones((1, 1))


def box_kernel(radius: int) -> np.ndarray:
    n = 2 * radius + 1
    return np.full((n, n), 1.0 / (n * n))


def laplacian_kernel() -> np.ndarray:
    """4-neighbour Laplacian stencil; weights sum to zero."""
    return np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    """Normalized isotropic Gaussian truncated to a (2r+1)^2 square.

    The default radius is ``ceil(3 * sigma)``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if radius is None:
        radius = int(np.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def convolve2d(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Convolve every channel with ``kernel`` using edge-replicated borders.

    Accepts (H, W) or (H, W, C) input and returns the same shape. The sum
    runs over kernel taps in a fixed order, so output is reproducible bit
    for bit.
    """
    arr = np.asarray(img, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    r = kernel_radius(kernel)
    h, w = arr.shape[:2]
    if r >= min(h, w):
        raise DimensionError(f"kernel radius {r} too large for {h}x{w} image")
    padded = np.pad(arr, ((r, r), (r, r), (0, 0)), mode="edge")
    out = np.zeros_like(arr)
    n = 2 * r + 1
    for a in range(n):
        for b in range(n):
            wt = kernel[a, b]
            if wt == 0.0:
                continue
            # true convolution: tap (a, b) reads the mirrored offset
            out += wt * padded[n - 1 - a : n - 1 - a + h, n - 1 - b : n - 1 - b + w]
    return out[:, :, 0] if squeeze else out
