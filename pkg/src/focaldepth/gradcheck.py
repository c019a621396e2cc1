"""Finite-difference verification of the renderer adjoint and the full loss chain.

The differences are taken on an independent brute-force renderer evaluated in
extended precision (``np.longdouble``): perturbing one pixel's depth only
changes that source's own contributions, so each perturbed evaluation updates
the cached numerator/denominator sums instead of re-rendering. In float64 the
cancellation in ``L(x+h) - L(x-h)`` swamps gradients that are ~1e-6 of the
largest one.

Support radii are frozen at the unperturbed values. Pixels whose blur sits
within ``floor_margin`` px of ``sigma_floor`` in any slice are not sampled
(the floor is a kink).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimate import stack_loss_and_grad
from .optics import FocusSchedule, LensConfig, coc_diameter_px, coc_scale, default_schedule
from .render import _adjoint, _render, render_stack, sigma_at, support_radius

LD = np.longdouble


@dataclass
class GradcheckResult:
    name: str
    seed: int
    n_checked: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.n_checked > 0 and self.max_rel_error <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name} seed={self.seed} pixels={self.n_checked} "
            f"max_rel_err={self.max_rel_error:.3e} tol={self.tolerance:.0e}"
        )


def relative_error(a, b, atol: float = 1e-300) -> float:
    return float(abs(a - b) / max(abs(a), abs(b), atol))


def _sigma_ld(depth, focus, lens):
    """Blur width in extended precision (same formula as ``sigma_at``)."""
    scale = LD(coc_scale(focus, lens))
    coc = scale * np.abs(LD(1) / np.asarray(depth, dtype=LD) - LD(1) / LD(focus))
    return np.maximum(LD(lens.sigma_floor), LD(lens.coc_to_sigma) * coc)


class ReferenceSlice:
    """Brute-force gather renderer for one slice with fixed support radii."""

    def __init__(self, aif, sigma, radius):
        self.aif = np.asarray(aif, dtype=LD)
        self.sigma = np.asarray(sigma, dtype=LD)
        self.radius = np.asarray(radius, dtype=np.int64)
        h, w, c = self.aif.shape
        r = int(self.radius.max())
        ap = np.pad(self.aif, ((r, r), (r, r), (0, 0)), mode="edge")
        sp = np.pad(self.sigma, r, mode="edge")
        rp = np.pad(self.radius, r, mode="edge")
        num = np.zeros((h, w, c), dtype=LD)
        den = np.zeros((h, w), dtype=LD)
        for a in range(-r, r + 1):
            for b in range(-r, r + 1):
                s = sp[r + a : r + a + h, r + b : r + b + w]
                inside = rp[r + a : r + a + h, r + b : r + b + w] >= max(abs(a), abs(b))
                wt = np.where(inside, np.exp(-LD(a * a + b * b) / (2 * s * s)), LD(0))
                num += wt[:, :, None] * ap[r + a : r + a + h, r + b : r + b + w]
                den += wt
        self.num, self.den = num, den

    def out(self):
        return self.num / self.den[:, :, None]

    def _weights_of(self, i, j, s):
        """Total weight pixel (i, j) (with all its border replicas) gives each target."""
        h, w = self.den.shape
        r = int(self.radius[i, j])
        rows = range(i if i > 0 else -r, (i if i < h - 1 else h - 1 + r) + 1)
        cols = range(j if j > 0 else -r, (j if j < w - 1 else w - 1 + r) + 1)
        acc = np.zeros((h, w), dtype=LD)
        yy = np.arange(h)[:, None]
        xx = np.arange(w)[None, :]
        for vi in rows:
            for vj in cols:
                near = (np.abs(yy - vi) <= r) & (np.abs(xx - vj) <= r)
                d2 = ((yy - vi) ** 2 + (xx - vj) ** 2).astype(LD)
                acc += np.where(near, np.exp(-d2 / (2 * s * s)), LD(0))
        return acc

    def out_with_sigma(self, i, j, new_sigma):
        """Slice after replacing pixel (i, j)'s blur width by ``new_sigma``."""
        delta = self._weights_of(i, j, LD(new_sigma)) - self._weights_of(i, j, self.sigma[i, j])
        num = self.num + delta[:, :, None] * self.aif[i, j]
        return num / (self.den + delta)[:, :, None]


def _eligible(depth, distances, lens, floor_margin):
    ok = np.ones(depth.shape, dtype=bool)
    for d in distances:
        raw = lens.coc_to_sigma * coc_diameter_px(depth, d, lens)
        ok &= np.abs(raw - lens.sigma_floor) > floor_margin
    return ok


def _pick(rng, eligible, n):
    idx = np.argwhere(eligible)
    if len(idx) < n:
        raise ValueError(f"only {len(idx)} eligible pixels, need {n}")
    return idx[rng.choice(len(idx), size=n, replace=False)]


def random_scene(rng, size, d_lo=0.8, d_hi=5.0, channels=3):
    aif = rng.random((size, size, channels))
    depth = rng.uniform(d_lo, d_hi, (size, size))
    return aif, depth


def check_render_adjoint(
    seed: int = 7,
    size: int = 16,
    n_pixels: int = 100,
    h: float = 1e-5,
    tol: float = 1e-4,
    lens: LensConfig | None = None,
    schedule: FocusSchedule | None = None,
    floor_margin: float = 1e-3,
) -> GradcheckResult:
    """Compare dL/d(depth) with central differences for L = <upstream, slice>."""
    lens = lens or LensConfig()
    schedule = schedule or default_schedule()
    rng = np.random.default_rng(seed)
    aif, depth = random_scene(rng, size)
    focus = float(schedule[rng.integers(len(schedule))])
    upstream = rng.standard_normal(aif.shape)
    cache = _render(aif, depth, focus, lens)
    grad = _adjoint(aif, depth, focus, lens, cache, upstream)
    ref = ReferenceSlice(aif, _sigma_ld(depth, focus, lens), cache.radius)
    up = upstream.astype(LD)
    worst = 0.0
    picks = _pick(rng, _eligible(depth, [focus], lens, floor_margin), n_pixels)
    for i, j in picks:
        vals = [
            (ref.out_with_sigma(i, j, _sigma_ld(LD(depth[i, j]) + LD(step), focus, lens)) * up).sum()
            for step in (h, -h)
        ]
        fd = (vals[0] - vals[1]) / (2 * LD(h))
        worst = max(worst, relative_error(grad[i, j], fd))
    return GradcheckResult("render_adjoint", seed, len(picks), worst, tol)


def _ld_loss(slices, observed, kind):
    diff = np.stack(slices) - observed.slices.astype(LD)
    return (np.abs(diff) if kind == "l1" else diff * diff).sum() / diff.size


def check_end_to_end(
    seed: int = 7,
    size: int = 16,
    n_pixels: int = 50,
    h: float = 1e-5,
    tol: float = 1e-4,
    kind: str = "l1",
    lens: LensConfig | None = None,
    schedule: FocusSchedule | None = None,
    floor_margin: float = 1e-3,
) -> GradcheckResult:
    """Compare dL/dq from the full chain with central differences in q."""
    lens = lens or LensConfig()
    schedule = schedule or default_schedule()
    rng = np.random.default_rng(seed)
    aif, depth_true = random_scene(rng, size)
    observed = render_stack(aif, depth_true, schedule, lens)
    q = 1.0 / rng.uniform(0.8, 5.0, (size, size))
    _, grad = stack_loss_and_grad(q, aif, observed, lens, kind)
    depth = 1.0 / q
    refs = []
    for d in schedule:
        radius = support_radius(sigma_at(depth, d, lens), lens)
        refs.append(ReferenceSlice(aif, _sigma_ld(LD(1) / q.astype(LD), d, lens), radius))
    worst = 0.0
    picks = _pick(rng, _eligible(depth, list(schedule), lens, floor_margin), n_pixels)
    for i, j in picks:
        vals = []
        for step in (h, -h):
            d_ij = LD(1) / (LD(q[i, j]) + LD(step))
            slices = [r.out_with_sigma(i, j, _sigma_ld(d_ij, d, lens)) for r, d in zip(refs, schedule)]
            vals.append(_ld_loss(slices, observed, kind))
        fd = (vals[0] - vals[1]) / (2 * LD(h))
        worst = max(worst, relative_error(grad[i, j], fd))
    return GradcheckResult(f"end_to_end_{kind}", seed, len(picks), worst, tol)


def run_suite(seed: int = 7, lens=None, schedule=None, n_scenes: int = 5) -> list:
    results = [check_render_adjoint(seed + k, lens=lens, schedule=schedule) for k in range(n_scenes)]
    results.append(check_end_to_end(seed, lens=lens, schedule=schedule))
    return results
