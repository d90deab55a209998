"""Flow-field utilities: reversal, forward-backward check, occlusion mask,
inverse-distance inpainting.

``reverse_flow`` converts a forward flow into the matching backward flow
by splatting negated displacements to where each pixel lands and
normalizing by the accumulated splat weight; uncovered pixels come back
as holes to be inpainted. ``fb_discrepancy`` is the differentiable
round-trip residual used both as a loss term and (thresholded, detached)
to mark unreliable flow.
"""

import numpy as np

from . import tape as T
from .grid import check_congruent, check_flow
from .warping import backward_warp, forward_splat

HOLE_WEIGHT_EPS = 1e-6

# 8 compass directions as (dy, dx)
_DIRECTIONS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]


def reverse_flow(f):
    """Reverse a forward flow field.

    Splat -f(p) to the bilinear neighborhood of p + f(p), normalize by the
    accumulated weight. Returns (reversed flow with holes zeroed,
    hole mask (H,W,1) with 1 where no weight arrived).
    """
    f = check_flow(f)
    acc, wacc = forward_splat(-f, f)
    covered = wacc[:, :, 0] >= HOLE_WEIGHT_EPS
    out = np.zeros_like(f)
    out[covered] = acc[covered] / wacc[covered]
    holes = np.where(covered, 0.0, 1.0)[:, :, None]
    return out, holes


def fb_discrepancy(f_back, f_fwd):
    """Round-trip residual of a backward/forward flow pair (tape op).

    delta(p) = p - (p' + f_fwd(p')) with p' = p + f_back(p), which reduces
    to -(f_back + warp(f_fwd, f_back)); f_fwd is sampled bilinearly at the
    displaced positions, so the residual is differentiable in both flows.
    """
    check_congruent(f_back.value, f_fwd.value, "fb_discrepancy")
    return T.neg(T.add(f_back, backward_warp(f_fwd, f_back)))


def occlusion_mask(delta, alpha):
    """Binary mask: 1 where |dx| + |dy| exceeds alpha.

    ``delta`` is a plain (H,W,2) array (detached from any tape; the
    threshold has zero gradient almost everywhere anyway).
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    delta = np.asarray(delta, dtype=np.float64)
    l1 = np.abs(delta[:, :, 0]) + np.abs(delta[:, :, 1])
    return (l1 > alpha).astype(np.float64)[:, :, None]


def _ray_nearest(valid, values, dy, dx):
    """Nearest valid value and step count along one compass ray.

    For each pixel, walk in direction (dy, dx) and report the first valid
    pixel's value and how many steps away it is (inf if the ray exits the
    frame first). Dynamic programming: scan so the neighbor one step along
    the ray is already resolved.
    """
    h, w = valid.shape
    c = values.shape[2]
    val = np.zeros((h, w, c))
    dist = np.full((h, w), np.inf)

    if dx == 0:
        dst = slice(0, w)
        src = slice(0, w)
    elif dx > 0:
        dst = slice(0, w - 1)
        src = slice(1, w)
    else:
        dst = slice(1, w)
        src = slice(0, w - 1)

    if dy != 0:
        rows = range(h - 2, -1, -1) if dy > 0 else range(1, h)
        for y in rows:
            sy = y + dy
            v = valid[sy, src]
            row_val = val[y, dst]
            row_dist = dist[y, dst]
            row_val[v] = values[sy, src][v]
            row_dist[v] = 1.0
            carry = (~v) & np.isfinite(dist[sy, src])
            row_val[carry] = val[sy, src][carry]
            row_dist[carry] = dist[sy, src][carry] + 1.0
    else:
        cols = range(w - 2, -1, -1) if dx > 0 else range(1, w)
        for x in cols:
            sx = x + dx
            v = valid[:, sx]
            col_val = val[:, x]
            col_dist = dist[:, x]
            col_val[v] = values[:, sx][v]
            col_dist[v] = 1.0
            carry = (~v) & np.isfinite(dist[:, sx])
            col_val[carry] = val[:, sx][carry]
            col_dist[carry] = dist[:, sx][carry] + 1.0
    return val, dist


def inpaint_flow(f, mask):
    """Fill masked flow pixels with an inverse-distance blend of valid ones.

    Each masked pixel ray-casts in the 8 compass directions, takes the
    first valid pixel per ray, and blends them with weights 1/distance
    (diagonal steps count sqrt(2)). Unmasked pixels pass through
    untouched. Pixels no ray can reach (possible for contrived masks) are
    filled in further passes that treat already-filled pixels as valid, so
    the output never has holes.
    """
    f = np.asarray(f, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    todo = mask[:, :, 0] > 0.5 if mask.ndim == 3 else mask > 0.5
    if not todo.any():
        return f.copy()
    if todo.all():
        raise ValueError("inpaint_flow: every pixel is masked; no valid flow to draw from")
    out = f.copy()
    valid = ~todo
    todo = todo.copy()
    h, w = todo.shape
    c = f.shape[2]
    while todo.any():
        num = np.zeros((h, w, c))
        den = np.zeros((h, w))
        for dy, dx in _DIRECTIONS:
            val, steps = _ray_nearest(valid, out, dy, dx)
            found = np.isfinite(steps) & todo
            if not found.any():
                continue
            wgt = 1.0 / (steps[found] * np.hypot(dy, dx))
            num[found] += wgt[:, None] * val[found]
            den[found] += wgt
        fillable = todo & (den > 0.0)
        if not fillable.any():  # unreachable with >=1 valid pixel, but fail loud
            raise RuntimeError("inpaint_flow made no progress")
        out[fillable] = num[fillable] / den[fillable][:, None]
        valid |= fillable
        todo &= ~fillable
    return out
