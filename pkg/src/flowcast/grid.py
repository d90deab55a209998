"""Dense H x W x C float64 grids.

A grid is a plain numpy array with shape (height, width, channels) and
dtype float64. Images and masks live in [0, 1]; flow fields are
unbounded 2-channel grids holding (dx, dy) pixel displacements.
"""

import numpy as np

from .errors import ShapeMismatchError


def as_grid(a, channels=None):
    """Coerce ``a`` to a float64 (H, W, C) array.

    2-D input gains a trailing channel axis. If ``channels`` is given the
    channel count is checked.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeMismatchError(f"grid must be 2-D or 3-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ShapeMismatchError(f"grid has empty dimension: shape {arr.shape}")
    if channels is not None and arr.shape[2] != channels:
        raise ShapeMismatchError(
            f"expected {channels} channel(s), got {arr.shape[2]} (shape {arr.shape})"
        )
    return arr


def zeros(height, width, channels=1):
    return np.zeros((height, width, channels), dtype=np.float64)


def full(height, width, channels, value):
    return np.full((height, width, channels), float(value), dtype=np.float64)


def check_congruent(a, b, what="operands"):
    """Require identical (H, W, C) shapes."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what}: shape {a.shape} vs {b.shape}")


def check_spatial(a, b, what="operands"):
    """Require identical spatial (H, W) extents; channels may differ."""
    if a.shape[:2] != b.shape[:2]:
        raise ShapeMismatchError(f"{what}: spatial shape {a.shape[:2]} vs {b.shape[:2]}")


def check_flow(f):
    """Validate a flow field: (H, W, 2), all values finite."""
    f = as_grid(f, channels=2)
    if not np.isfinite(f).all():
        raise ValueError("flow field contains non-finite values")
    return f
