"""Initial flow for the prediction optimizer.

The observed flow f_{t->t-1} is estimated classically (same estimator as
the interpolation backend, detached from any tape), negated as a
linear-motion continuation, and pushed through the flow-reversal layer;
the reversal holes are inpainted so the optimizer always starts from a
finite, hole-free field.
"""

import numpy as np

from . import tape as T
from .flow_ops import inpaint_flow, reverse_flow
from .grid import as_grid, check_congruent
from .interp import BackendConfig, estimate_flow_nodes

INIT_MODES = ("flow", "zero", "noise")
NOISE_SIGMA_DEFAULT = 1.0  # px; the ablation's noise scale


def estimate_flow(a, b, cfg=None):
    """Classical flow from frame a to frame b (plain array, no tape).

    Convention fixed by the warp-consistency oracle:
    backward_warp(b, flow) ~= a, i.e. flow(p) points at where a's pixel p
    sits in b.
    """
    a = as_grid(a)
    b = as_grid(b)
    check_congruent(a, b, "estimate_flow")
    scratch = T.Tape()
    node = estimate_flow_nodes(scratch.constant(a), scratch.constant(b), cfg)
    return node.detach()


def init_prediction_flow(x_prev, x_curr, cfg=None, mode="flow", noise_sigma=NOISE_SIGMA_DEFAULT, rng=None):
    """Initial value for the optimized flow from frame t+1 back to t.

    mode "flow" implements the reversed-negated-observed-flow rule:
    estimate f_{t->t-1}, negate it, reverse it, inpaint the holes. Modes
    "zero" and "noise" are the ablation switches (noise is Gaussian with
    ``noise_sigma`` px, drawn from ``rng``).
    """
    x_prev = as_grid(x_prev)
    x_curr = as_grid(x_curr)
    check_congruent(x_prev, x_curr, "init_prediction_flow")
    h, w, _ = x_curr.shape
    if mode == "zero":
        return np.zeros((h, w, 2))
    if mode == "noise":
        rng = rng or np.random.default_rng()
        return rng.normal(0.0, noise_sigma, size=(h, w, 2))
    if mode != "flow":
        raise ValueError(f"unknown init mode {mode!r}; expected one of {INIT_MODES}")
    cfg = cfg or BackendConfig()
    f_back_obs = estimate_flow(x_curr, x_prev, cfg)
    reversed_flow, holes = reverse_flow(-f_back_obs)
    return inpaint_flow(reversed_flow, holes)
