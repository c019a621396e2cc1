"""Depth from focal stacks by fitting a differentiable defocus renderer."""

from .aif import composite_aif, dff_argmax_depth, focus_measure
from .estimate import EstimateResult, LossConfig, estimate_depth
from .imaging import DepthRange
from .metrics import delta_accuracy, evaluate, rmse
from .optics import FocusSchedule, LensConfig, check_schedule_tiling, default_schedule
from .render import FocalStack, render_slice, render_slice_adjoint, render_stack

__version__ = "0.1.0"

__all__ = [
    "DepthRange",
    "EstimateResult",
    "FocalStack",
    "FocusSchedule",
    "LensConfig",
    "LossConfig",
    "check_schedule_tiling",
    "composite_aif",
    "default_schedule",
    "delta_accuracy",
    "dff_argmax_depth",
    "estimate_depth",
    "evaluate",
    "focus_measure",
    "render_slice",
    "render_slice_adjoint",
    "render_stack",
    "rmse",
]
