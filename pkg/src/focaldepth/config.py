"""Flat ``key = value`` pipeline configuration.

One pair per line, ``#`` starts a comment. Keys not given take the defaults
below; command-line flags override file values. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .estimate import LossConfig
from .imaging import DepthRange
from .optics import FocusSchedule, LensConfig, default_schedule
from .scenes import SceneSpec


class ConfigError(ValueError):
    def __init__(self, key, message, line=None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{where}: {message}")


@dataclass
class PipelineConfig:
    # lens
    focal_length: float = 0.025
    f_number: float = 2.0
    pixel_pitch: float = 1e-5
    coc_to_sigma: float = 0.5
    sigma_floor: float = 0.25
    max_kernel_radius: int = 24
    coc_threshold: float = 1.0
    # focus schedule and depth range
    schedule: str = "default"
    d_min: float = 0.7
    d_max: float = 10.0
    # optimization
    loss: str = "l1"
    smoothness: float = 0.0
    lr: float = 0.02
    iterations: int = 500
    tolerance: float = 1e-5
    init: str = "dff"
    # all-in-focus estimate
    aif_mode: str = "argmax"
    softmax_tau: float = 0.0
    fv_sigma: float = 2.0
    # synthetic scene for synth/pipeline
    scene: str = "plane:1.2"
    height: int = 128
    width: int = 128
    texture: str = "noise"
    correlation_length: float = 1.0
    seed: int = 7
    # paths ("" = unset)
    out_dir: str = "out"
    stack_dir: str = ""
    rgb_path: str = ""
    depth_path: str = ""
    aif_path: str = ""
    gt_path: str = ""
    pred_path: str = ""

    def lens(self) -> LensConfig:
        return LensConfig(
            self.focal_length, self.f_number, self.pixel_pitch,
            self.coc_to_sigma, self.sigma_floor, self.max_kernel_radius,
        )

    def depth_range(self) -> DepthRange:
        return DepthRange(self.d_min, self.d_max)

    def focus_schedule(self) -> FocusSchedule:
        if self.schedule.strip() == "default":
            return default_schedule()
        return FocusSchedule(tuple(float(x) for x in self.schedule.split(",")))

    def loss_config(self) -> LossConfig:
        return LossConfig(
            kind=self.loss, smoothness=self.smoothness, iterations=self.iterations,
            lr=self.lr, tolerance=self.tolerance,
        )

    def init_spec(self):
        if self.init == "dff":
            return "dff"
        kind, _, value = self.init.partition(":")
        if kind == "constant" and value:
            return float(value)
        raise ValueError(f"init must be 'dff' or 'constant:<meters>', got {self.init!r}")

    def scene_spec(self) -> SceneSpec:
        return SceneSpec.parse(
            self.scene, height=self.height, width=self.width, texture=self.texture,
            seed=self.seed, correlation_length=self.correlation_length,
        )

    def aif_tau(self):
        return self.softmax_tau if self.aif_mode == "softmax" else None

    def validate(self) -> "PipelineConfig":
        """Check every derived object; raise ConfigError naming the culprit key."""
        checks = [
            (("focal_length", "f_number", "pixel_pitch", "coc_to_sigma", "sigma_floor", "max_kernel_radius"), self.lens),
            (("d_min", "d_max"), self.depth_range),
            (("schedule",), self.focus_schedule),
            (("loss", "smoothness", "lr", "iterations", "tolerance"), self.loss_config),
            (("init",), self.init_spec),
        ]
        for keys, build in checks:
            try:
                build()
            except ValueError as exc:
                raise ConfigError(_blame(keys, str(exc)), str(exc)) from None
        try:
            self.lens().check_range(self.depth_range())
        except ValueError as exc:
            raise ConfigError("d_min", str(exc)) from None
        try:
            self.focus_schedule().check_range(self.depth_range())
        except ValueError as exc:
            raise ConfigError("schedule", str(exc)) from None
        if self.coc_threshold <= 0:
            raise ConfigError("coc_threshold", "must be positive")
        if self.aif_mode not in ("argmax", "softmax"):
            raise ConfigError("aif_mode", "must be 'argmax' or 'softmax'")
        if self.aif_mode == "softmax" and self.softmax_tau <= 0:
            raise ConfigError("softmax_tau", "softmax compositing needs softmax_tau > 0")
        if self.fv_sigma < 0:
            raise ConfigError("fv_sigma", "must be non-negative")
        return self

    def to_text(self) -> str:
        lines = ["# effective configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {_fmt(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _blame(keys, message):
    for k in keys:
        if k in message:
            return k
    return keys[0]


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def convert(key: str, raw: str, line=None):
    if key not in FIELD_TYPES:
        raise ConfigError(key, "unknown key", line)
    typ = FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if typ in ("float", float):
            return float(raw)
        if typ in ("int", int):
            return int(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {typ}", line) from None
    return raw


def read_config_file(path) -> dict:
    values = {}
    path = Path(path)
    for lineno, text in enumerate(path.read_text().splitlines(), start=1):
        text = text.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(text, "expected 'key = value'", lineno)
        key, _, raw = text.partition("=")
        key = key.strip()
        values[key] = (convert(key, raw, lineno), lineno)
    return values


def parse_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Build a validated config from an optional file plus flag overrides."""
    values = read_config_file(path) if path else {}
    lines = {k: ln for k, (_, ln) in values.items()}
    merged = {k: v for k, (v, _) in values.items()}
    for key, raw in (overrides or {}).items():
        merged[key] = convert(key, raw) if isinstance(raw, str) else raw
        lines.pop(key, None)
    cfg = dataclasses.replace(PipelineConfig(), **merged)
    try:
        return cfg.validate()
    except ConfigError as exc:
        if exc.line is None and exc.key in lines:
            raise ConfigError(exc.key, str(exc).split(": ", 1)[1], lines[exc.key]) from None
        raise
