"""Frozen differentiable frame-interpolation backend.

Given two frames, the backend estimates the frame-to-frame flow with a
coarse-to-fine Horn-Schunck scheme built entirely from tape ops (fixed
pyramid depth, fixed iteration count, so the recorded graph has the same
shape every call), splits it into midpoint flows by the linear-motion
rule, and produces a sigmoid blend mask from the two one-sided warp
errors. Everything it returns is differentiable w.r.t. the inputs; with
``differentiable_flow=False`` the flow estimate is detached and gradients
pass only through the warps.

The backend holds no mutable state: identical inputs and config give
bit-identical outputs.
"""

from dataclasses import dataclass

import numpy as np

from . import tape as T
from .errors import ShapeMismatchError
from .grid import check_congruent
from .warping import backward_warp

LUMA = (0.299, 0.587, 0.114)
INTENSITY_SCALE = 255.0  # HS constants are calibrated for 8-bit-style intensities
BLEND_KAPPA = 10.0

_HS_AVG = np.array(
    [[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]]
)
_DX = np.array([[-0.5, 0.0, 0.5]])
_DY = _DX.T
_BLUR = np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0

_MIN_COARSE_SIDE = 6


@dataclass(frozen=True)
class BackendConfig:
    """Classical-backend knobs. Frozen: nothing mutates it mid-run."""

    pyramid_levels: int = 4
    hs_iterations: int = 20
    hs_lambda: float = 15.0
    differentiable_flow: bool = True

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if self.hs_iterations < 1:
            raise ValueError(f"hs_iterations must be >= 1, got {self.hs_iterations}")
        if not self.hs_lambda > 0:
            raise ValueError(f"hs_lambda must be > 0, got {self.hs_lambda}")


@dataclass
class InterpOutput:
    """Backend outputs: midpoint flows and blend mask (all tape nodes)."""

    f_back: T.Node
    f_fwd: T.Node
    blend: T.Node
    # warped frames cached so blend_midpoint can reuse them when called
    # with the same inputs
    _i_prev: T.Node = None
    _i_next: T.Node = None
    _x_prev: T.Node = None
    _x_next: T.Node = None


def _to_intensity(x):
    """Luma node scaled to 0..255-style range for the flow estimator."""
    c = x.channels
    if c == 3:
        w = [l * INTENSITY_SCALE for l in LUMA]
    else:
        w = [INTENSITY_SCALE / c] * c
    return T.channel_dot(x, w)


def effective_levels(h, w, requested):
    """Pyramid depth clamped so the coarsest level keeps >= 6 px per side."""
    levels = 1
    side = min(h, w)
    while levels < requested and side // 2 ** levels >= _MIN_COARSE_SIDE:
        levels += 1
    return levels


def _pyramid(gray, levels):
    """Finest-first list of smoothed, halved copies."""
    out = [gray]
    for _ in range(levels - 1):
        prev = out[-1]
        h, w, _ = prev.value.shape
        blurred = T.conv2d(prev, _BLUR)
        out.append(T.resize_bilinear(blurred, (h + 1) // 2, (w + 1) // 2))
    return out


def _hs_refine(a, b, u, v, iterations, alpha):
    """One pyramid level: warp b by the current flow, then fixed-count
    Jacobi iterations on the flow increment. ``alpha`` is the classic
    Horn-Schunck regularizer on 0..255-scale intensities (the update
    denominator uses alpha**2)."""
    t = a.tape
    h, w, _ = a.value.shape
    if u is None:
        zero = t.constant(np.zeros((h, w, 1)))
        u, v = zero, zero
        b_w = b
    else:
        b_w = backward_warp(b, T.concat_channels([u, v]))
    fx = (T.conv2d(a, _DX) + T.conv2d(b_w, _DX)) * 0.5
    fy = (T.conv2d(a, _DY) + T.conv2d(b_w, _DY)) * 0.5
    ft = b_w - a
    inv_den = 1.0 / (T.square(fx) + T.square(fy) + alpha * alpha)
    zero = t.constant(np.zeros((h, w, 1)))
    du, dv = zero, zero
    for _ in range(iterations):
        du_avg = T.conv2d(du, _HS_AVG)
        dv_avg = T.conv2d(dv, _HS_AVG)
        rate = (fx * du_avg + fy * dv_avg + ft) * inv_den
        du = du_avg - fx * rate
        dv = dv_avg - fy * rate
    return u + du, v + dv


def estimate_flow_nodes(x_a, x_b, cfg=None):
    """Coarse-to-fine flow from frame a to frame b as a differentiable node.

    Convention: b(p + flow(p)) ~= a(p), i.e. the flow tells where each
    pixel of a went.
    """
    cfg = cfg or BackendConfig()
    check_congruent(x_a.value, x_b.value, "estimate_flow")
    h, w, _ = x_a.value.shape
    levels = effective_levels(h, w, cfg.pyramid_levels)
    ga = _pyramid(_to_intensity(x_a), levels)
    gb = _pyramid(_to_intensity(x_b), levels)
    u = v = None
    for lvl in range(levels - 1, -1, -1):
        a_l, b_l = ga[lvl], gb[lvl]
        lh, lw, _ = a_l.value.shape
        if u is not None:
            ph, pw, _ = ga[lvl + 1].value.shape
            sx = (lw - 1) / max(pw - 1, 1)
            sy = (lh - 1) / max(ph - 1, 1)
            u = T.resize_bilinear(u, lh, lw) * sx
            v = T.resize_bilinear(v, lh, lw) * sy
        u, v = _hs_refine(a_l, b_l, u, v, cfg.hs_iterations, cfg.hs_lambda)
    return T.concat_channels([u, v])


def interpolate(x_prev, x_next, cfg=None):
    """Run the frozen interpolation module on two frame nodes.

    Returns midpoint flows f_back (toward x_prev), f_fwd (toward x_next)
    from the linear-motion split of the estimated frame-to-frame flow,
    plus the blend mask sigma(kappa * (e_plus - e_minus)) built from the
    one-sided warp errors e_plus = mean_c|warp(x_next, f_fwd) - x_prev|
    and e_minus = mean_c|warp(x_prev, f_back) - x_next|.
    """
    cfg = cfg or BackendConfig()
    if not isinstance(x_prev, T.Node) or not isinstance(x_next, T.Node):
        raise TypeError("interpolate expects tape nodes")
    check_congruent(x_prev.value, x_next.value, "interpolate")
    tape = x_prev.tape
    if cfg.differentiable_flow:
        full = estimate_flow_nodes(x_prev, x_next, cfg)
    else:
        scratch = T.Tape()
        detached = estimate_flow_nodes(
            scratch.constant(x_prev.value), scratch.constant(x_next.value), cfg
        )
        full = tape.constant(detached.value)
    f_fwd = full * 0.5
    f_back = full * -0.5
    i_prev = backward_warp(x_prev, f_back)
    i_next = backward_warp(x_next, f_fwd)
    c = x_prev.channels
    mean_c = [1.0 / c] * c
    e_plus = T.channel_dot(T.absval(i_next - x_prev), mean_c)
    e_minus = T.channel_dot(T.absval(i_prev - x_next), mean_c)
    blend = T.sigmoid((e_plus - e_minus) * BLEND_KAPPA)
    return InterpOutput(
        f_back=f_back,
        f_fwd=f_fwd,
        blend=blend,
        _i_prev=i_prev,
        _i_next=i_next,
        _x_prev=x_prev,
        _x_next=x_next,
    )


# Pluggable backend registry. A backend is a callable
# (x_prev: Node, x_next: Node, cfg: BackendConfig) -> InterpOutput whose
# returned nodes live on the inputs' tape; "classical" is the built-in.
_BACKENDS = {"classical": interpolate}


def register_backend(name, fn):
    """Register a drop-in interpolation backend under ``name``."""
    if not callable(fn):
        raise TypeError("backend must be callable")
    _BACKENDS[name] = fn


def get_backend(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; registered: {sorted(_BACKENDS)}"
        ) from None


def blend_midpoint(out, x_prev, x_next):
    """Warp both frames to the midpoint and blend with the mask.

    Returns (I_prev, I_next, I_mid) where
    I_mid = blend * I_prev + (1 - blend) * I_next.
    """
    if x_prev.value.shape != x_next.value.shape:
        raise ShapeMismatchError(
            f"blend_midpoint: {x_prev.value.shape} vs {x_next.value.shape}"
        )
    if out._i_prev is not None and out._x_prev is x_prev and out._x_next is x_next:
        i_prev, i_next = out._i_prev, out._i_next
    else:
        i_prev = backward_warp(x_prev, out.f_back)
        i_next = backward_warp(x_next, out.f_fwd)
    m = T.repeat_channels(out.blend, x_prev.channels)
    i_mid = i_prev * m + i_next * (1.0 - m)
    return i_prev, i_next, i_mid
