"""Bilinear warping primitives.

``backward_warp`` is a tape op: each output pixel p samples the source at
p + flow(p) with bilinear interpolation, differentiable w.r.t. both the
source values and the flow. ``forward_splat`` scatters source values to
the bilinear neighborhood of p + flow(p); it is used only at
initialization time (flow reversal) and is deliberately not recorded on
any tape.

Sample coordinates clamp to the frame edge. At a clamped pixel the sample
no longer moves with the flow along the clamped axis, so the flow
gradient is zeroed there (the true piecewise derivative).
"""

import numpy as np

from .grid import check_spatial
from .tape import Node


def _mesh(h, w):
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return ys, xs


def _bilinear_setup(flow, h, w):
    """Clamped sample coordinates, corner indices, weights, clamp masks."""
    ys, xs = _mesh(h, w)
    cx = xs + flow[:, :, 0]
    cy = ys + flow[:, :, 1]
    live_x = (cx > 0.0) & (cx < w - 1)  # strictly inside: edge samples are clamp-stationary
    live_y = (cy > 0.0) & (cy < h - 1)
    cx = np.clip(cx, 0.0, w - 1)
    cy = np.clip(cy, 0.0, h - 1)
    x0 = np.clip(np.floor(cx).astype(np.intp), 0, w - 2)
    y0 = np.clip(np.floor(cy).astype(np.intp), 0, h - 2)
    wx = cx - x0
    wy = cy - y0
    i00 = y0 * w + x0
    i01 = i00 + 1
    i10 = i00 + w
    i11 = i10 + 1
    return i00, i01, i10, i11, wx, wy, live_x, live_y


def _warp_forward(src, flow):
    h, w, c = src.shape
    i00, i01, i10, i11, wx, wy, live_x, live_y = _bilinear_setup(flow, h, w)
    f = src.reshape(-1, c)
    wx = wx[:, :, None]
    wy = wy[:, :, None]
    top = (1.0 - wx) * f[i00] + wx * f[i01]
    bot = (1.0 - wx) * f[i10] + wx * f[i11]
    out = (1.0 - wy) * top + wy * bot
    return out, (i00, i01, i10, i11, wx, wy, live_x, live_y, f)


def backward_warp_array(src, flow):
    """Plain-array backward warp (no tape)."""
    check_spatial(src, flow, "backward_warp")
    out, _ = _warp_forward(src, flow)
    return out


def backward_warp(src, flow):
    """Differentiable backward warp of a grid node by a flow node.

    out(p) = bilinear(src, p + flow(p)); flow channel 0 is the horizontal
    displacement, channel 1 the vertical one.
    """
    if not isinstance(src, Node) or not isinstance(flow, Node):
        raise TypeError("backward_warp expects tape nodes; use backward_warp_array for raw grids")
    if src.tape is not flow.tape:
        raise ValueError("src and flow recorded on different tapes")
    check_spatial(src.value, flow.value, "backward_warp")
    if flow.value.shape[2] != 2:
        raise ValueError(f"flow must have 2 channels, got {flow.value.shape[2]}")
    h, w, c = src.value.shape
    if h < 2 or w < 2:
        raise ValueError(f"backward_warp needs at least 2x2 grids, got {h}x{w}")
    t = src.tape
    out, saved = _warp_forward(src.value, flow.value)
    i00, i01, i10, i11, wx, wy, live_x, live_y, f = saved

    def bp(g):
        # d out / d src: scatter the four corner weights
        w00 = ((1.0 - wy) * (1.0 - wx)).ravel()
        w01 = ((1.0 - wy) * wx).ravel()
        w10 = (wy * (1.0 - wx)).ravel()
        w11 = (wy * wx).ravel()
        gs = np.empty((h * w, c))
        gflat = g.reshape(-1, c)
        n = h * w
        for ch in range(c):
            gc = gflat[:, ch]
            acc = np.bincount(i00.ravel(), w00 * gc, minlength=n)
            acc += np.bincount(i01.ravel(), w01 * gc, minlength=n)
            acc += np.bincount(i10.ravel(), w10 * gc, minlength=n)
            acc += np.bincount(i11.ravel(), w11 * gc, minlength=n)
            gs[:, ch] = acc
        t._acc(src, gs.reshape(h, w, c))

        # d out / d flow: the local gradient of the bilinear surface
        dx = (1.0 - wy) * (f[i01] - f[i00]) + wy * (f[i11] - f[i10])
        dy = (1.0 - wx) * (f[i10] - f[i00]) + wx * (f[i11] - f[i01])
        gfl = np.empty((h, w, 2))
        gfl[:, :, 0] = (g * dx).sum(axis=2) * live_x
        gfl[:, :, 1] = (g * dy).sum(axis=2) * live_y
        t._acc(flow, gfl)

    return t._record(out, bp)


def forward_splat(values, flow):
    """Scatter values along the flow with bilinear weights.

    Each source pixel p contributes values(p) to the four integer
    neighbors of p + flow(p), weighted bilinearly; contributions landing
    outside the frame are dropped. Returns (accumulated values (H,W,C),
    accumulated weights (H,W,1)). Not a tape op.
    """
    check_spatial(values, flow, "forward_splat")
    h, w, c = values.shape
    ys, xs = _mesh(h, w)
    tx = (xs + flow[:, :, 0]).ravel()
    ty = (ys + flow[:, :, 1]).ravel()
    x0 = np.floor(tx).astype(np.intp)
    y0 = np.floor(ty).astype(np.intp)
    wx = tx - x0
    wy = ty - y0
    vals = values.reshape(-1, c)
    acc = np.zeros((h * w, c))
    wacc = np.zeros(h * w)
    n = h * w
    for dy, dx, wgt in (
        (0, 0, (1 - wy) * (1 - wx)),
        (0, 1, (1 - wy) * wx),
        (1, 0, wy * (1 - wx)),
        (1, 1, wy * wx),
    ):
        xi = x0 + dx
        yi = y0 + dy
        ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        if not ok.any():
            continue
        idx = yi[ok] * w + xi[ok]
        wk = wgt[ok]
        wacc += np.bincount(idx, wk, minlength=n)
        for ch in range(c):
            acc[:, ch] += np.bincount(idx, wk * vals[ok, ch], minlength=n)
    return acc.reshape(h, w, c), wacc.reshape(h, w, 1)
