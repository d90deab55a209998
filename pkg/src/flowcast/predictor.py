"""Test-time optimization of the prediction flow.

Each predicted frame is an independent argmin: starting from the
initialization flow, rebuild the tape every iteration, evaluate the
objective (image term through the frozen interpolation backend plus the
forward-backward consistency term), backpropagate to the flow, take an
Adam step, and optionally inpaint flow values the consistency check marks
unreliable. Multi-frame prediction chains single-frame predictions on the
two most recent frames.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tape as T
from .errors import DivergenceError
from .flow_init import NOISE_SIGMA_DEFAULT, init_prediction_flow
from .flow_ops import fb_discrepancy, inpaint_flow, occlusion_mask
from .grid import as_grid, check_congruent
from .interp import BackendConfig, blend_midpoint, interpolate
from .warping import backward_warp, backward_warp_array

LOSS_VARIANTS = ("img_l1", "img_mse", "interp_target")
INPAINT_CADENCES = ("per_iteration", "final_only", "off")

EARLY_STOP_WINDOW = 200
EARLY_STOP_REL_CHANGE = 1e-5


@dataclass
class OptimConfig:
    w_img: float = 1.0
    w_cons: float = 3.0
    alpha: float = 1.5
    lr: float = 0.1
    iterations: int = 3000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_variant: str = "img_l1"
    inpaint_cadence: str = "per_iteration"
    init: str = "flow"
    noise_sigma: float = NOISE_SIGMA_DEFAULT
    seed: int = 0
    early_stop: bool = False

    def __post_init__(self):
        if self.w_img < 0 or self.w_cons < 0:
            raise ValueError("loss weights must be >= 0")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"loss_variant {self.loss_variant!r} not in {LOSS_VARIANTS}")
        if self.inpaint_cadence not in INPAINT_CADENCES:
            raise ValueError(
                f"inpaint_cadence {self.inpaint_cadence!r} not in {INPAINT_CADENCES}"
            )


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, x):
        return cls(m=np.zeros_like(x), v=np.zeros_like(x), step=0)


@dataclass
class PredictionTrace:
    """Per-iteration loss records plus the run's final flow and frame."""

    total: list = field(default_factory=list)
    img: list = field(default_factory=list)
    cons: list = field(default_factory=list)
    final_flow: np.ndarray = None
    final_frame: np.ndarray = None

    def append(self, total, img, cons):
        self.total.append(total)
        self.img.append(img)
        self.cons.append(cons)

    def __len__(self):
        return len(self.total)


@dataclass
class _LossParts:
    total: T.Node
    l_img: T.Node
    l_cons: T.Node
    delta: T.Node


def _build_losses(tape, x_prev_arr, x_curr_arr, flow_node, cfg, backend_cfg, backend_fn=None):
    """Assemble the objective on ``tape`` with the flow as the only variable."""
    backend_fn = backend_fn or interpolate
    x_prev = tape.constant(x_prev_arr)
    x_curr = tape.constant(x_curr_arr)
    x_pred = backward_warp(x_curr, flow_node)
    out = backend_fn(x_prev, x_pred, backend_cfg)

    if cfg.loss_variant == "interp_target":
        _, _, i_mid = blend_midpoint(out, x_prev, x_pred)
        l_img = T.mean_abs(i_mid - x_curr)
    else:
        i_next = backward_warp(x_pred, out.f_fwd)
        diff = i_next - x_curr
        if cfg.loss_variant == "img_mse":
            l_img = T.mean_abs(T.square(diff))
        else:
            l_img = T.mean_abs(diff)

    delta = fb_discrepancy(flow_node, out.f_fwd)
    l_cons = T.mean_abs(delta)

    # skip zero-weighted terms so their subgraphs drop out of the sweep
    total = None
    if cfg.w_img != 0.0:
        total = l_img * cfg.w_img
    if cfg.w_cons != 0.0:
        term = l_cons * cfg.w_cons
        total = term if total is None else total + term
    if total is None:
        total = tape.constant(np.zeros((1, 1, 1)))
    return _LossParts(total=total, l_img=l_img, l_cons=l_cons, delta=delta)


def total_loss(x_prev, x_curr, flow_node, cfg=None, backend_cfg=None, backend_fn=None):
    """Scalar objective node for a candidate prediction flow.

    ``flow_node`` must already live on a tape; the frames are recorded
    there as constants.
    """
    cfg = cfg or OptimConfig()
    backend_cfg = backend_cfg or BackendConfig()
    x_prev = as_grid(x_prev)
    x_curr = as_grid(x_curr)
    check_congruent(x_prev, x_curr, "total_loss")
    parts = _build_losses(flow_node.tape, x_prev, x_curr, flow_node, cfg, backend_cfg, backend_fn)
    if not np.isfinite(parts.total.value).all():
        raise DivergenceError("total loss is non-finite")
    return parts.total


def adam_step(flow, grad, state, cfg):
    """One bias-corrected Adam update; returns (new flow, new state)."""
    check_congruent(flow, grad, "adam_step")
    if not np.isfinite(grad).all():
        raise DivergenceError("non-finite gradient")
    step = state.step + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** step)
    v_hat = v / (1.0 - cfg.beta2 ** step)
    new_flow = flow - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return new_flow, AdamState(m=m, v=v, step=step)


def _plateaued(totals):
    if len(totals) <= EARLY_STOP_WINDOW:
        return False
    ref = totals[-1 - EARLY_STOP_WINDOW]
    return abs(totals[-1] - ref) < EARLY_STOP_REL_CHANGE * max(abs(ref), 1e-12)


def predict_next(x_prev, x_curr, cfg=None, backend_cfg=None, init_flow=None, backend_fn=None):
    """Predict the frame after ``x_curr``.

    Optimizes the backward flow from the unknown next frame to ``x_curr``
    for ``cfg.iterations`` Adam steps and returns
    (predicted frame clamped to [0,1], final flow, trace). ``init_flow``
    overrides the configured initialization (used by the recurrence).
    """
    cfg = cfg or OptimConfig()
    backend_cfg = backend_cfg or BackendConfig()
    x_prev = as_grid(x_prev)
    x_curr = as_grid(x_curr)
    check_congruent(x_prev, x_curr, "predict_next")

    if init_flow is not None:
        flow = as_grid(init_flow, channels=2).copy()
    else:
        rng = np.random.default_rng(cfg.seed)
        flow = init_prediction_flow(
            x_prev, x_curr, backend_cfg, mode=cfg.init, noise_sigma=cfg.noise_sigma, rng=rng
        )

    state = AdamState.zeros_like(flow)
    trace = PredictionTrace()
    per_iter_inpaint = cfg.inpaint_cadence == "per_iteration"

    for _ in range(cfg.iterations):
        tape = T.Tape()
        flow_node = tape.leaf(flow)
        parts = _build_losses(tape, x_prev, x_curr, flow_node, cfg, backend_cfg, backend_fn)
        total = parts.total.item()
        trace.append(total, parts.l_img.item(), parts.l_cons.item())
        if not np.isfinite(total):
            raise DivergenceError(f"loss diverged at iteration {len(trace) - 1}", trace=trace)
        tape.backward(parts.total)
        grad = tape.grad(flow_node)
        try:
            flow, state = adam_step(flow, grad, state, cfg)
        except DivergenceError as err:
            raise DivergenceError(
                f"gradient diverged at iteration {len(trace) - 1}", trace=trace
            ) from err
        if per_iter_inpaint:
            mask = occlusion_mask(parts.delta.value, cfg.alpha)
            if mask.any():
                flow = inpaint_flow(flow, mask)
        if cfg.early_stop and _plateaued(trace.total):
            break

    if cfg.inpaint_cadence == "final_only":
        tape = T.Tape()
        flow_node = tape.leaf(flow)
        parts = _build_losses(tape, x_prev, x_curr, flow_node, cfg, backend_cfg, backend_fn)
        mask = occlusion_mask(parts.delta.value, cfg.alpha)
        if mask.any():
            flow = inpaint_flow(flow, mask)

    frame = np.clip(backward_warp_array(x_curr, flow), 0.0, 1.0)
    trace.final_flow = flow
    trace.final_frame = frame
    return frame, flow, trace


def predict_sequence(x_prev, x_curr, horizon, cfg=None, backend_cfg=None, collect=None, backend_fn=None):
    """Recurrent multi-frame prediction.

    Predicts ``horizon`` frames, always feeding the two most recent frames
    back in (the first prediction uses the configured initialization; later
    ones re-derive it from the updated pair). Returns the list of predicted
    frames; ``collect``, if given, receives (frame, flow, trace) per step.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    frames = []
    a, b = as_grid(x_prev), as_grid(x_curr)
    for _ in range(horizon):
        frame, flow, trace = predict_next(a, b, cfg, backend_cfg, backend_fn=backend_fn)
        frames.append(frame)
        if collect is not None:
            collect(frame, flow, trace)
        a, b = b, frame
    return frames
