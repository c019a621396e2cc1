"""Deterministic synthetic RGB-D scenes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import DepthRange, convolve2d, gaussian_kernel

KINDS = ("plane", "staircase", "two_plane")
TEXTURES = ("noise", "checker")


@dataclass(frozen=True)
class SceneSpec:
    """Geometry and texture of a synthetic scene.

    ``depths`` holds one value for ``plane``, the left-to-right band depths
    for ``staircase`` and ``(left, right)`` for ``two_plane``, split at column
    ``split * width``.
    """

    kind: str = "plane"
    depths: tuple = (1.2,)
    height: int = 128
    width: int = 128
    texture: str = "noise"
    seed: int = 7
    correlation_length: float = 1.0
    period: int = 4
    split: float = 0.5
    channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(float(d) for d in self.depths))
        if self.kind not in KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if self.texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.texture!r}")
        need = {"plane": 1, "two_plane": 2}.get(self.kind)
        if need is not None and len(self.depths) != need:
            raise ValueError(f"{self.kind} needs {need} depth(s), got {len(self.depths)}")
        if not self.depths:
            raise ValueError("scene needs at least one depth")
        if self.height < 32 or self.width < 32:
            raise ValueError("scenes must be at least 32x32")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if not 0 < self.split < 1:
            raise ValueError("split must lie in (0, 1)")
        if self.period < 1 or self.correlation_length < 0:
            raise ValueError("texture scale must be positive")

    @property
    def name(self) -> str:
        ds = "-".join(f"{d:g}" for d in self.depths)
        return f"{self.kind}_{ds}"

    @classmethod
    def parse(cls, text: str, **kw) -> "SceneSpec":
        """Parse ``kind:d1,d2,...`` such as ``plane:1.2`` or ``staircase:0.8,1.2,2.4``."""
        kind, _, rest = text.partition(":")
        if not rest:
            raise ValueError(f"scene {text!r} must look like kind:depth[,depth...]")
        try:
            depths = tuple(float(x) for x in rest.split(","))
        except ValueError:
            raise ValueError(f"bad depths in scene {text!r}") from None
        return cls(kind=kind.strip(), depths=depths, **kw)


def make_texture(spec: SceneSpec) -> np.ndarray:
    h, w, c = spec.height, spec.width, spec.channels
    if spec.texture == "checker":
        yy, xx = np.mgrid[0:h, 0:w]
        board = ((yy // spec.period + xx // spec.period) % 2).astype(np.float64)
        tex = 0.2 + 0.6 * board
        return np.repeat(tex[:, :, None], c, axis=2)
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal((h, w, c))
    if spec.correlation_length > 0:
        noise = convolve2d(noise, gaussian_kernel(spec.correlation_length))
    # mix a shared luminance component so channels stay correlated
    shared = noise.mean(axis=2, keepdims=True)
    noise = 0.7 * shared + 0.3 * noise
    noise = (noise - noise.mean()) / noise.std()
    return np.clip(0.5 + 0.15 * noise, 0.0, 1.0)


def make_depth(spec: SceneSpec) -> np.ndarray:
    h, w = spec.height, spec.width
    if spec.kind == "plane":
        return np.full((h, w), spec.depths[0])
    if spec.kind == "two_plane":
        depth = np.full((h, w), spec.depths[1])
        depth[:, : int(round(spec.split * w))] = spec.depths[0]
        return depth
    n = len(spec.depths)
    edges = np.linspace(0, w, n + 1).round().astype(int)
    depth = np.empty((h, w))
    for d, a, b in zip(spec.depths, edges[:-1], edges[1:]):
        depth[:, a:b] = d
    return depth


def make_scene(spec: SceneSpec, depth_range: DepthRange | None = None):
    """Return ``(aif, depth)`` for ``spec``; identical specs give identical arrays."""
    depth_range = depth_range or DepthRange()
    if min(spec.depths) < depth_range.d_min or max(spec.depths) > depth_range.d_max:
        raise ValueError(f"scene depths {spec.depths} outside [{depth_range.d_min}, {depth_range.d_max}]")
    return make_texture(spec), make_depth(spec)
