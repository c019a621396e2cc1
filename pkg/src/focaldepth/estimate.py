"""Unsupervised depth recovery by re-rendering the focal stack.

Depth is parameterized per pixel as inverse depth ``q = 1/depth`` (diopters)
and fitted with Adam so that the stack rendered from ``(aif, 1/q)`` matches the
observed one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .aif import dff_argmax_depth, focus_measure
from .imaging import DepthRange, DimensionError, as_depth, as_image, luma
from .optics import LensConfig
from .render import FocalStack, _adjoint, _check_pair, _render

log = logging.getLogger(__name__)


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class LossConfig:
    kind: str = "l1"
    smoothness: float = 0.0
    iterations: int = 500
    lr: float = 0.02
    tolerance: float = 1e-5
    window: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("l1", "l2"):
            raise ValueError(f"loss kind must be 'l1' or 'l2', got {self.kind!r}")
        if self.smoothness < 0:
            raise ValueError("smoothness weight must be non-negative")
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ValueError("iterations must be a non-negative integer")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


def photometric_loss(rendered: FocalStack, observed: FocalStack, kind: str = "l1"):
    """Mean L1/L2 discrepancy over every slice, pixel and channel.

    Returns ``(loss, dloss/drendered)``, the gradient shaped like the slices.
    """
    if rendered.schedule.distances != observed.schedule.distances:
        raise ValueError("stacks were focused at different distances")
    if rendered.slices.shape != observed.slices.shape:
        raise DimensionError(f"stack shapes differ: {rendered.slices.shape} vs {observed.slices.shape}")
    diff = rendered.slices - observed.slices
    n = diff.size
    if kind == "l1":
        return float(np.abs(diff).sum() / n), np.sign(diff) / n
    if kind == "l2":
        return float((diff * diff).sum() / n), 2.0 * diff / n
    raise ValueError(f"unknown loss kind {kind!r}")


def smoothness_penalty(inv_depth, aif, weight: float) -> float:
    gray = luma(aif)
    dqx = np.abs(np.diff(inv_depth, axis=1)) * np.exp(-np.abs(np.diff(gray, axis=1)))
    dqy = np.abs(np.diff(inv_depth, axis=0)) * np.exp(-np.abs(np.diff(gray, axis=0)))
    return float(weight * (dqx.sum() + dqy.sum()))


def smoothness_grad(inv_depth, aif, weight: float) -> np.ndarray:
    """Gradient of the image-gated total variation of inverse depth."""
    q = np.asarray(inv_depth, dtype=np.float64)
    grad = np.zeros_like(q)
    if weight == 0:
        return grad
    gray = luma(aif)
    if gray.shape != q.shape:
        raise DimensionError("inverse depth and image differ in size")
    gx = weight * np.sign(np.diff(q, axis=1)) * np.exp(-np.abs(np.diff(gray, axis=1)))
    gy = weight * np.sign(np.diff(q, axis=0)) * np.exp(-np.abs(np.diff(gray, axis=0)))
    grad[:, 1:] += gx
    grad[:, :-1] -= gx
    grad[1:, :] += gy
    grad[:-1, :] -= gy
    return grad


@dataclass
class AdamState:
    lr: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, lo: float = -np.inf, hi: float = np.inf):
    """One bias-corrected Adam update followed by clamping to ``[lo, hi]``.

    Updates ``state`` in place and returns the new parameter array.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise DimensionError(f"gradient {grad.shape} does not match parameters {params.shape}")
    bad = ~np.isfinite(grad)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteError(f"non-finite gradient at {idx}: {grad[idx]}")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    elif state.m.shape != params.shape:
        raise DimensionError("Adam moments do not match parameters")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1**state.step)
    v_hat = state.v / (1 - state.beta2**state.step)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return np.clip(new, lo, hi)


def stack_loss_and_grad(q, aif, observed: FocalStack, lens: LensConfig, kind: str = "l1"):
    """Loss and dL/dq for inverse depth ``q`` (no smoothness term)."""
    depth = 1.0 / q
    caches = [_render(aif, depth, d, lens) for d in observed.schedule]
    rendered = FocalStack(np.stack([c.out for c in caches]), observed.schedule)
    loss, upstream = photometric_loss(rendered, observed, kind)
    gdepth = np.zeros_like(q)
    for d, c, up in zip(observed.schedule, caches, upstream):
        gdepth += _adjoint(aif, depth, d, lens, c, up)
    return loss, gdepth * (-1.0 / (q * q))


def stack_loss(q, aif, observed: FocalStack, lens: LensConfig, kind: str = "l1", radii=None) -> float:
    depth = 1.0 / q
    radii = radii if radii is not None else [None] * len(observed)
    slices = [_render(aif, depth, d, lens, r).out for d, r in zip(observed.schedule, radii)]
    return photometric_loss(FocalStack(np.stack(slices), observed.schedule), observed, kind)[0]


@dataclass
class EstimateResult:
    depth: np.ndarray
    losses: list = field(default_factory=list)
    rmses: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def trace_rows(self):
        rows = []
        for i, loss in enumerate(self.losses):
            rmse = repr(self.rmses[i]) if i < len(self.rmses) else ""
            rows.append((i, repr(loss), rmse))
        return rows


def initial_depth(init, observed: FocalStack, depth_range: DepthRange, fv_sigma: float = 2.0) -> np.ndarray:
    """Resolve an init spec: a float (constant meters), ``"dff"`` or an array."""
    h, w = observed.shape[:2]
    if isinstance(init, str):
        if init != "dff":
            raise ValueError(f"unknown init {init!r}")
        depth = dff_argmax_depth(focus_measure(observed, fv_sigma), observed.schedule)
    elif np.isscalar(init):
        depth = np.full((h, w), float(init))
    else:
        depth = as_depth(init)
        if depth.shape != (h, w):
            raise DimensionError("initial depth does not match the stack")
    return np.clip(depth, depth_range.d_min, depth_range.d_max)


def estimate_depth(
    observed: FocalStack,
    aif,
    lens: LensConfig,
    cfg: LossConfig | None = None,
    init="dff",
    depth_range: DepthRange | None = None,
    gt=None,
    mask=None,
    fv_sigma: float = 2.0,
) -> EstimateResult:
    """Fit inverse depth to the observed stack with Adam.

    Stops after ``cfg.iterations`` updates or once the loss dropped by less
    than ``cfg.tolerance`` (relative) over the last ``cfg.window`` iterations;
    a tolerance of 0 disables the early stop.
    ``losses[i]`` is the loss of the iterate before update ``i``. When ``gt``
    is given the RMSE over ``mask`` is traced alongside.
    """
    cfg = cfg or LossConfig()
    depth_range = depth_range or DepthRange()
    aif = as_image(aif)
    if aif.shape != observed.shape:
        raise DimensionError(f"AIF {aif.shape} does not match stack slices {observed.shape}")
    aif = np.ascontiguousarray(aif)
    depth0 = initial_depth(init, observed, depth_range, fv_sigma)
    q = 1.0 / depth0
    lo, hi = depth_range.q_min, depth_range.q_max
    q = np.clip(q, lo, hi)
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    result = EstimateResult(depth=np.clip(1.0 / q, depth_range.d_min, depth_range.d_max))
    if gt is not None:
        from .metrics import rmse as _rmse

    for it in range(cfg.iterations):
        loss, gq = stack_loss_and_grad(q, aif, observed, lens, cfg.kind)
        if not np.isfinite(loss):
            raise NonFiniteError(f"loss became non-finite at iteration {it}")
        result.losses.append(loss)
        if gt is not None:
            result.rmses.append(_rmse(np.clip(1.0 / q, depth_range.d_min, depth_range.d_max), gt, mask))
        if cfg.smoothness > 0:
            gq = gq + smoothness_grad(q, aif, cfg.smoothness)
        q = adam_step(state, q, gq, lo, hi)
        result.iterations = it + 1
        if cfg.tolerance > 0 and it >= cfg.window:
            prev = result.losses[it - cfg.window]
            if prev > 0 and (prev - loss) / prev < cfg.tolerance:
                result.converged = True
                log.info("converged after %d iterations (loss %.3g)", it + 1, loss)
                break
    result.depth = np.clip(1.0 / q, depth_range.d_min, depth_range.d_max)
    return result
