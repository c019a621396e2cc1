"""Differentiable focal-stack synthesis.

Each slice is a spatially varying Gaussian blur of the all-in-focus image in
gather form. A source pixel ``y`` spreads with its own width
``sigma(y) = max(sigma_floor, coc_to_sigma * coc(depth(y)))`` over a square
support of radius ``r(y) = min(ceil(3 sigma(y)), max_kernel_radius)``::

    out(x) = sum_y w(x, y) aif(y) / sum_y w(x, y)
    w(x, y) = exp(-|x - y|^2 / (2 sigma(y)^2))

Sources beyond the frame are edge-replicated copies (aif, depth and radius of
the clamped pixel), so a uniform-sigma render equals :func:`convolve2d` with
the matching normalized Gaussian.

The adjoint returns dL/d(depth) for a given dL/d(out). Support radii are
treated as constants, i.e. the derivative of the truncation edge is dropped.

The forward scatter runs serially and the adjoint parallelizes over source
rows only, each pixel summing its terms in a fixed order, so results do not
depend on the thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

# avoid probing an incompatible TBB install
numba.config.THREADING_LAYER = "omp"

from .imaging import DimensionError, as_depth, as_image
from .optics import FocusSchedule, LensConfig, coc_depth_gradient, coc_diameter_px


@dataclass
class FocalStack:
    """Slices as an (S, H, W, C) array plus one focus distance per slice."""

    slices: np.ndarray
    schedule: FocusSchedule

    def __post_init__(self):
        s = np.asarray(self.slices, dtype=np.float64)
        if s.ndim == 3:
            s = s[..., None]
        if s.ndim != 4 or s.shape[0] < 1:
            raise DimensionError(f"focal stack must be (S, H, W, C), got {s.shape}")
        if s.shape[0] != len(self.schedule):
            raise DimensionError(
                f"{s.shape[0]} slices but {len(self.schedule)} focus distances"
            )
        self.slices = s

    def __len__(self):
        return self.slices.shape[0]

    @property
    def shape(self):
        return self.slices.shape[1:]


def sigma_at(depth, focus_dist, lens: LensConfig):
    """Gaussian PSF width in pixels, floored at ``lens.sigma_floor``."""
    return np.maximum(lens.sigma_floor, lens.coc_to_sigma * coc_diameter_px(depth, focus_dist, lens))


def support_radius(sigma, lens: LensConfig):
    r = np.ceil(3.0 * np.asarray(sigma, dtype=np.float64)).astype(np.int64)
    return np.minimum(r, lens.max_kernel_radius)


@njit(cache=True, parallel=True)
def _gauss_tables(sigma, rmax):
    h, w = sigma.shape
    table = np.empty((h, w, rmax + 1))
    for i in prange(h):
        for j in range(w):
            inv = 1.0 / (2.0 * sigma[i, j] * sigma[i, j])
            for k in range(rmax + 1):
                table[i, j, k] = math.exp(-k * k * inv)
    return table


@njit(cache=True)
def _forward(aif, table, radius, rmax):
    # Scatter every (possibly replicated) source into its clipped window.
    # Serial on purpose: the accumulation order is then fixed.
    h, w, nc = aif.shape
    num = np.zeros((nc, h, w))
    den = np.zeros((h, w))
    gj = np.empty(2 * rmax + 1)
    for vi in range(-rmax, h + rmax):
        si = min(max(vi, 0), h - 1)
        for vj in range(-rmax, w + rmax):
            sj = min(max(vj, 0), w - 1)
            r = radius[si, sj]
            t0 = max(vi - r, 0)
            t1 = min(vi + r, h - 1)
            u0 = max(vj - r, 0)
            u1 = min(vj + r, w - 1)
            if t0 > t1 or u0 > u1:
                continue
            n = u1 - u0 + 1
            for k in range(n):
                gj[k] = table[si, sj, abs(u0 + k - vj)]
            for ti in range(t0, t1 + 1):
                gi = table[si, sj, abs(ti - vi)]
                drow = den[ti]
                for k in range(n):
                    drow[u0 + k] += gi * gj[k]
                for c in range(nc):
                    a = gi * aif[si, sj, c]
                    nrow = num[c, ti]
                    for k in range(n):
                        nrow[u0 + k] += a * gj[k]
    out = np.empty((h, w, nc))
    for c in range(nc):
        for i in range(h):
            for j in range(w):
                out[i, j, c] = num[c, i, j] / den[i, j]
    return out, den


@njit(cache=True, parallel=True, fastmath={"reassoc", "nsz"})
def _adjoint_sigma(aif, table, radius, sigma, out, den, upstream):
    """dL/d(sigma(y)) for every source pixel y, gathered over its targets."""
    h, w, nc = aif.shape
    # quotient-rule factors per target, channel-major for contiguous rows
    p = np.empty((nc, h, w))
    q = np.empty((h, w))
    for i in prange(h):
        for j in range(w):
            acc = 0.0
            for c in range(nc):
                p[c, i, j] = upstream[i, j, c] / den[i, j]
                acc += upstream[i, j, c] * out[i, j, c]
            q[i, j] = acc / den[i, j]
    rmax = table.shape[2] - 1
    grad = np.zeros((h, w))
    for si in prange(h):
        gj = np.empty(2 * rmax + 1)
        gj2 = np.empty(2 * rmax + 1)
        z = np.empty(2 * rmax + 1)
        for sj in range(w):
            r = radius[si, sj]
            # virtual (replicated) positions that map onto this source
            vi_lo = si if si > 0 else -r
            vi_hi = si if si < h - 1 else h - 1 + r
            vj_lo = sj if sj > 0 else -r
            vj_hi = sj if sj < w - 1 else w - 1 + r
            total = 0.0
            for vj in range(vj_lo, vj_hi + 1):
                u0 = max(vj - r, 0)
                n = min(vj + r, w - 1) - u0 + 1
                for k in range(n):
                    dj = abs(u0 + k - vj)
                    gj[k] = table[si, sj, dj]
                    gj2[k] = gj[k] * (dj * dj)
                for vi in range(vi_lo, vi_hi + 1):
                    for ti in range(max(vi - r, 0), min(vi + r, h - 1) + 1):
                        di = abs(ti - vi)
                        qrow = q[ti]
                        for k in range(n):
                            z[k] = -qrow[u0 + k]
                        for c in range(nc):
                            a = aif[si, sj, c]
                            prow = p[c, ti]
                            for k in range(n):
                                z[k] += a * prow[u0 + k]
                        s0 = 0.0
                        s2 = 0.0
                        for k in range(n):
                            s0 += gj[k] * z[k]
                            s2 += gj2[k] * z[k]
                        total += table[si, sj, di] * (di * di * s0 + s2)
            sg = sigma[si, sj]
            grad[si, sj] = total / (sg * sg * sg)
    return grad


@dataclass
class SliceCache:
    """Forward-pass state reused by the adjoint."""

    out: np.ndarray
    den: np.ndarray
    sigma: np.ndarray
    radius: np.ndarray
    table: np.ndarray


def _render(aif, depth, focus_dist, lens, radius=None) -> SliceCache:
    sigma = sigma_at(depth, focus_dist, lens)
    if radius is None:
        radius = support_radius(sigma, lens)
    else:
        radius = np.asarray(radius, dtype=np.int64)
        if radius.shape != depth.shape:
            raise DimensionError("radius map must match the depth map")
    rmax = int(radius.max())
    table = _gauss_tables(sigma, rmax)
    out, den = _forward(aif, table, radius, rmax)
    return SliceCache(out, den, sigma, radius, table)


def _check_pair(aif, depth):
    aif = as_image(aif)
    depth = as_depth(depth)
    if aif.shape[:2] != depth.shape:
        raise DimensionError(f"image {aif.shape[:2]} and depth {depth.shape} differ in size")
    return np.ascontiguousarray(aif), np.ascontiguousarray(depth)


def render_slice(aif, depth, focus_dist: float, lens: LensConfig, radius=None) -> np.ndarray:
    """Render one defocused slice focused at ``focus_dist`` meters.

    ``radius`` optionally pins the per-pixel support radii (e.g. to the radii
    of a reference pass when finite-differencing).
    """
    aif, depth = _check_pair(aif, depth)
    return _render(aif, depth, focus_dist, lens, radius).out


def render_stack(aif, depth, schedule: FocusSchedule, lens: LensConfig) -> FocalStack:
    aif, depth = _check_pair(aif, depth)
    slices = [_render(aif, depth, d, lens).out for d in schedule]
    return FocalStack(np.stack(slices), schedule)


def _depth_grad_from_sigma(grad_sigma, depth, focus_dist, lens, sigma):
    # floor active -> sigma is locally constant in depth
    active = sigma > lens.sigma_floor
    dsig = np.where(active, lens.coc_to_sigma * coc_depth_gradient(depth, focus_dist, lens), 0.0)
    return grad_sigma * dsig


def _adjoint(aif, depth, focus_dist, lens, cache: SliceCache, upstream) -> np.ndarray:
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    if upstream.ndim == 2:
        upstream = upstream[:, :, None]
    if upstream.shape != aif.shape:
        raise DimensionError(f"upstream {upstream.shape} does not match output {aif.shape}")
    gs = _adjoint_sigma(aif, cache.table, cache.radius, cache.sigma, cache.out, cache.den, upstream)
    return _depth_grad_from_sigma(gs, depth, focus_dist, lens, cache.sigma)


def render_slice_adjoint(aif, depth, focus_dist: float, lens: LensConfig, upstream, radius=None) -> np.ndarray:
    """dL/d(depth) per pixel (1/m) given dL/d(out) for one slice."""
    aif, depth = _check_pair(aif, depth)
    cache = _render(aif, depth, focus_dist, lens, radius)
    return _adjoint(aif, depth, focus_dist, lens, cache, upstream)


def set_threads(n: int) -> int:
    """Bound kernel parallelism; returns the thread count actually used."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n
