"""Thin-lens defocus: circle of confusion, depth of field and focus schedules.

The circle of confusion (CoC) of a point at ``depth`` for a lens focused at
``focus_dist`` is linear in the diopter offset::

    c = s(d_f) * |1/depth - 1/d_f|,    s(d_f) = A * f * d_f / (d_f - f) / pitch

with aperture diameter ``A = f / N``. ``s`` is the lens' CoC scale in pixels
per diopter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import DepthRange

DEFAULT_DISTANCES = (0.8, 1.0, 1.2, 1.6, 2.4, 5.0)


class OpticsDomainError(ValueError):
    pass


@dataclass(frozen=True)
class LensConfig:
    focal_length: float = 0.025
    f_number: float = 2.0
    pixel_pitch: float = 1e-5
    coc_to_sigma: float = 0.5
    sigma_floor: float = 0.25
    max_kernel_radius: int = 24

    def __post_init__(self):
        for name in ("focal_length", "f_number", "pixel_pitch", "sigma_floor"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if not (0 < self.coc_to_sigma <= 1):
            raise ValueError(f"coc_to_sigma must be in (0, 1], got {self.coc_to_sigma}")
        if int(self.max_kernel_radius) != self.max_kernel_radius or self.max_kernel_radius < 1:
            raise ValueError(f"max_kernel_radius must be a positive integer, got {self.max_kernel_radius}")

    @property
    def aperture(self) -> float:
        return self.focal_length / self.f_number

    def check_range(self, depth_range: DepthRange) -> None:
        if self.focal_length >= depth_range.d_min:
            raise ValueError(
                f"focal_length {self.focal_length} m must be shorter than d_min {depth_range.d_min} m"
            )


@dataclass(frozen=True)
class FocusSchedule:
    distances: tuple = field(default=DEFAULT_DISTANCES)

    def __post_init__(self):
        d = tuple(float(x) for x in self.distances)
        object.__setattr__(self, "distances", d)
        if len(d) < 1:
            raise ValueError("focus schedule must contain at least one distance")
        if any(not (math.isfinite(x) and x > 0) for x in d):
            raise ValueError(f"focus distances must be positive, got {d}")
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError(f"focus distances must be strictly increasing, got {d}")

    def __len__(self):
        return len(self.distances)

    def __iter__(self):
        return iter(self.distances)

    def __getitem__(self, i):
        return self.distances[i]

    def check_range(self, depth_range: DepthRange) -> None:
        if self.distances[0] < depth_range.d_min or self.distances[-1] > depth_range.d_max:
            raise ValueError(
                f"focus distances {self.distances} outside [{depth_range.d_min}, {depth_range.d_max}]"
            )


def default_schedule() -> FocusSchedule:
    return FocusSchedule(DEFAULT_DISTANCES)


def coc_scale(focus_dist, lens: LensConfig):
    """CoC in pixels per diopter of defocus for a lens focused at ``focus_dist``."""
    f = lens.focal_length
    focus_dist = np.asarray(focus_dist, dtype=np.float64)
    if np.any(focus_dist <= f):
        raise OpticsDomainError(f"focus distance must exceed focal length {f} m")
    return lens.aperture * f * focus_dist / (focus_dist - f) / lens.pixel_pitch


def _check_depth(depth, lens):
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= lens.focal_length):
        raise OpticsDomainError(f"depth must exceed focal length {lens.focal_length} m")
    return depth


def coc_diameter_px(depth, focus_dist, lens: LensConfig):
    """Circle-of-confusion diameter in pixels; scalar or elementwise."""
    depth = _check_depth(depth, lens)
    c = coc_scale(focus_dist, lens) * np.abs(1.0 / depth - 1.0 / focus_dist)
    return c[()] if isinstance(c, np.ndarray) else c


def coc_depth_gradient(depth, focus_dist, lens: LensConfig):
    """d(coc)/d(depth) in pixels per meter; 0 exactly at the in-focus plane."""
    depth = _check_depth(depth, lens)
    g = coc_scale(focus_dist, lens) * np.sign(1.0 / depth - 1.0 / focus_dist) * (-1.0 / depth**2)
    return g[()] if isinstance(g, np.ndarray) else g


def dof_limits(focus_dist: float, lens: LensConfig, coc_threshold: float = 1.0):
    """Near and far depths where the CoC reaches ``coc_threshold`` pixels.

    ``far`` is ``inf`` once the far limit passes the hyperfocal point.
    """
    if coc_threshold < 0:
        raise ValueError("coc_threshold must be non-negative")
    w = dof_half_width(focus_dist, lens, coc_threshold)
    near = 1.0 / (1.0 / focus_dist + w)
    far_q = 1.0 / focus_dist - w
    far = math.inf if far_q <= 0 else 1.0 / far_q
    return near, far


def dof_half_width(focus_dist: float, lens: LensConfig, coc_threshold: float = 1.0) -> float:
    """Half-width of the depth of field, in diopters."""
    return float(coc_threshold / coc_scale(focus_dist, lens))


@dataclass
class TilingReport:
    # overlap_diopters[i] > 0: slices i and i+1 overlap; < 0: gap between them
    overlap_diopters: list
    near_limit: float
    far_limit: float
    covers_near: bool
    covers_far: bool
    coc_threshold: float

    @property
    def max_abs_residual(self) -> float:
        return max(abs(x) for x in self.overlap_diopters)

    @property
    def covers_range(self) -> bool:
        return self.covers_near and self.covers_far

    def rows(self):
        return [(i, g) for i, g in enumerate(self.overlap_diopters)]


def check_schedule_tiling(
    schedule: FocusSchedule,
    lens: LensConfig,
    coc_threshold: float = 1.0,
    depth_range: DepthRange | None = None,
) -> TilingReport:
    """Audit how the depths of field of adjacent slices meet.

    For each adjacent pair the signed residual is
    ``near_diopter(i+1) - far_diopter(i)``: positive is overlap, negative a gap,
    zero is exact contact.
    """
    if len(schedule) < 2:
        raise ValueError("tiling audit needs at least two focus distances")
    depth_range = depth_range or DepthRange()
    q = [1.0 / d for d in schedule]
    w = [dof_half_width(d, lens, coc_threshold) for d in schedule]
    residuals = [(q[i + 1] + w[i + 1]) - (q[i] - w[i]) for i in range(len(q) - 1)]
    near, _ = dof_limits(schedule[0], lens, coc_threshold)
    _, far = dof_limits(schedule[-1], lens, coc_threshold)
    return TilingReport(
        overlap_diopters=residuals,
        near_limit=near,
        far_limit=far,
        covers_near=near <= depth_range.d_min,
        covers_far=far >= depth_range.d_max,
        coc_threshold=coc_threshold,
    )


def calibrate_coc_threshold(schedule: FocusSchedule, lens: LensConfig) -> float:
    """CoC threshold (px) making the mean DoF half-width half the mean slice gap."""
    if len(schedule) < 2:
        raise ValueError("calibration needs at least two focus distances")
    q = np.array([1.0 / d for d in schedule])
    mean_gap = float(np.mean(q[:-1] - q[1:]))
    inv_scale = np.array([1.0 / coc_scale(d, lens) for d in schedule])
    return 0.5 * mean_gap / float(np.mean(inv_scale))
