"""Figure rendering for reports. All figures are written straight to files."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image as PILImage  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
    "image.interpolation": "nearest",
}
# no timestamps, so reruns give identical files
PNG_META = {"Software": None}

DEPTH_CMAP = "magma_r"


def _save(fig, path):
    fig.savefig(path, metadata=PNG_META if str(path).endswith(".png") else None)
    plt.close(fig)


def colorize_depth(depth, d_min: float = 0.7, d_max: float = 10.0, cmap: str = DEPTH_CMAP) -> np.ndarray:
    """Map depth to 8-bit RGB on a log scale (near = bright)."""
    lo, hi = math.log(d_min), math.log(d_max)
    t = (np.log(np.clip(depth, d_min, d_max)) - lo) / (hi - lo)
    rgba = matplotlib.colormaps[cmap](t)
    return np.round(rgba[..., :3] * 255).astype(np.uint8)


def save_depth_preview(path, depth, d_min: float = 0.7, d_max: float = 10.0) -> None:
    PILImage.fromarray(colorize_depth(depth, d_min, d_max), mode="RGB").save(path, format="PNG")


def _show(ax, img):
    img = np.clip(img, 0, 1)
    if img.ndim == 3 and img.shape[2] == 1:
        ax.imshow(img[:, :, 0], cmap="gray", vmin=0, vmax=1)
    else:
        ax.imshow(img)
    ax.set_xticks([])
    ax.set_yticks([])


def plot_stack(path, stack) -> None:
    n = len(stack)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, n, figsize=(1.6 * n, 1.8), squeeze=False)
        for ax, sl, d in zip(axes[0], stack.slices, stack.schedule):
            _show(ax, sl)
            ax.set_title(f"focus {d:g} m")
        _save(fig, path)


def plot_depth_comparison(path, aif, pred, gt=None, d_min=0.7, d_max=10.0) -> None:
    """Scene, predicted depth and (optionally) ground truth side by side."""
    panels = [("scene", None), ("predicted depth", pred)]
    if gt is not None:
        panels.append(("ground truth", gt))
    norm = matplotlib.colors.LogNorm(vmin=d_min, vmax=d_max)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(2.4 * len(panels), 2.4))
        _show(axes[0], aif)
        axes[0].set_title("scene")
        im = None
        for ax, (title, d) in zip(axes[1:], panels[1:]):
            im = ax.imshow(d, cmap=DEPTH_CMAP, norm=norm)
            ax.set_title(title)
            ax.set_xticks([])
            ax.set_yticks([])
        fig.colorbar(im, ax=list(axes[1:]), shrink=0.8, label="depth (m)")
        _save(fig, path)


def plot_loss_trace(path, losses, rmses=None) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        ax.semilogy(np.arange(len(losses)), losses, color="C0", lw=1)
        ax.set_xlabel("iteration")
        ax.set_ylabel("photometric loss", color="C0")
        if rmses:
            ax2 = ax.twinx()
            ax2.plot(np.arange(len(rmses)), rmses, color="C3", lw=1)
            ax2.set_ylabel("RMSE (m)", color="C3")
        ax.grid(alpha=0.3)
        _save(fig, path)


def plot_benchmark(path, result) -> None:
    from .benchmark import METHOD_TITLES

    rows = result.aggregate
    labels = [METHOD_TITLES.get(r.label, r.label) for r in rows]
    x = np.arange(len(rows))
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 2.8))
        ax0.bar(x, [r.rmse for r in rows], color=[f"C{i}" for i in range(len(rows))])
        ax0.set_xticks(x, labels, rotation=15, ha="right")
        ax0.set_ylabel("RMSE (m)")
        width = 0.25
        for k, key in enumerate(("delta1", "delta2", "delta3")):
            ax1.bar(x + (k - 1) * width, [getattr(r, key) for r in rows], width, label=f"d < 1.25^{k + 1}")
        ax1.set_xticks(x, labels, rotation=15, ha="right")
        ax1.set_ylim(0, 1.05)
        ax1.legend(loc="lower right")
        _save(fig, path)


def plot_tiling(path, schedule, lens, coc_threshold, depth_range=None) -> None:
    """Depth-of-field intervals of each slice on a diopter axis."""
    from .optics import dof_half_width

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 2.2))
        for i, d in enumerate(schedule):
            w = dof_half_width(d, lens, coc_threshold)
            ax.barh(i, 2 * w, left=1.0 / d - w, height=0.6, color=f"C{i % 10}", alpha=0.7)
            ax.plot([1.0 / d], [i], "k|")
        if depth_range is not None:
            for q in (1.0 / depth_range.d_max, 1.0 / depth_range.d_min):
                ax.axvline(q, color="0.4", ls="--", lw=0.8)
        ax.set_yticks(range(len(schedule)), [f"{d:g} m" for d in schedule])
        ax.set_xlabel("diopters (1/m)")
        _save(fig, path)
