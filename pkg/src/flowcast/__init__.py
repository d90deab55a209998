"""flowcast: future video frames by test-time flow optimization.

Given two frames, the library optimizes a backward optical-flow field so
that warping the newest frame by it yields a next frame consistent with a
frozen differentiable frame-interpolation module, then repeats the
process recurrently for longer horizons.
"""

from .errors import ConfigError, DivergenceError, FrameIOError, ShapeMismatchError
from .flow_init import estimate_flow, init_prediction_flow
from .flow_ops import fb_discrepancy, inpaint_flow, occlusion_mask, reverse_flow
from .flowviz import flow_to_color
from .interp import (
    BackendConfig,
    InterpOutput,
    blend_midpoint,
    get_backend,
    interpolate,
    register_backend,
)
from .metrics import MetricsReport, mean_epe, ms_ssim, psnr, ssim
from .predictor import (
    AdamState,
    OptimConfig,
    PredictionTrace,
    adam_step,
    predict_next,
    predict_sequence,
    total_loss,
)
from .scenes import SceneSpec, generate_scene, prediction_target_flow
from .tape import Node, Tape
from .warping import backward_warp, backward_warp_array, forward_splat

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BackendConfig",
    "ConfigError",
    "DivergenceError",
    "FrameIOError",
    "InterpOutput",
    "MetricsReport",
    "Node",
    "OptimConfig",
    "PredictionTrace",
    "SceneSpec",
    "ShapeMismatchError",
    "Tape",
    "adam_step",
    "backward_warp",
    "backward_warp_array",
    "blend_midpoint",
    "estimate_flow",
    "fb_discrepancy",
    "flow_to_color",
    "forward_splat",
    "generate_scene",
    "get_backend",
    "init_prediction_flow",
    "inpaint_flow",
    "interpolate",
    "mean_epe",
    "ms_ssim",
    "occlusion_mask",
    "predict_next",
    "predict_sequence",
    "prediction_target_flow",
    "psnr",
    "register_backend",
    "reverse_flow",
    "ssim",
    "total_loss",
]
