"""Color-wheel rendering of flow fields.

Hue encodes direction, saturation encodes magnitude relative to
``max_magnitude`` (clamped), value is 1 everywhere: zero flow renders
white, opposite vectors get complementary hues.
"""

import numpy as np

from .grid import as_grid


def _hsv_to_rgb(hue, sat, val):
    h6 = (hue % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = val * (1.0 - sat)
    q = val * (1.0 - sat * f)
    t = val * (1.0 - sat * (1.0 - f))
    r = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [val, q, p, p, t, val])
    g = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [t, val, val, q, p, p])
    b = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [p, p, t, val, val, q])
    return np.stack([r, g, b], axis=-1)


def flow_to_color(flow, max_magnitude):
    """Render a flow field as an RGB image in [0, 1]."""
    if not max_magnitude > 0:
        raise ValueError(f"max_magnitude must be positive, got {max_magnitude}")
    flow = as_grid(flow, channels=2)
    u, v = flow[:, :, 0], flow[:, :, 1]
    mag = np.hypot(u, v)
    hue = np.arctan2(v, u) / (2.0 * np.pi)
    sat = np.clip(mag / float(max_magnitude), 0.0, 1.0)
    return _hsv_to_rgb(hue, sat, np.ones_like(sat))
