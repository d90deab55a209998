"""Image sequence I/O.

Reads PNG and binary PPM (P6) at 8 or 16 bits into [0,1] float grids
(8-bit v/255, 16-bit v/65535); writes 8-bit PNG with round-half-up
quantization. OpenCV does the codec work; channel order is converted so
grids are always RGB.
"""

import os

import cv2
import numpy as np

from .errors import FrameIOError

_SUPPORTED_EXT = {".png", ".ppm", ".pnm"}


def load_frame(path):
    """Decode one image file to a float64 (H, W, C) grid in [0, 1]."""
    ext = os.path.splitext(path)[1].lower()
    if ext not in _SUPPORTED_EXT:
        raise FrameIOError(f"{path}: unsupported format {ext!r} (PNG or binary PPM only)")
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FrameIOError(f"{path}: unreadable or not a valid image")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FrameIOError(f"{path}: unsupported sample type {raw.dtype} (8 or 16 bit only)")
    arr = raw.astype(np.float64) / scale
    if arr.ndim == 2:
        return arr[:, :, None]
    if arr.shape[2] == 3:
        return arr[:, :, ::-1].copy()  # BGR -> RGB
    raise FrameIOError(f"{path}: {arr.shape[2]}-channel images are not supported")


def load_frames(paths):
    """Load a sequence; all frames must agree in size and channel count."""
    if len(paths) < 2:
        raise FrameIOError(f"need at least 2 frames, got {len(paths)}")
    frames = [load_frame(p) for p in paths]
    first = frames[0]
    for path, frame in zip(paths[1:], frames[1:]):
        if frame.shape != first.shape:
            raise FrameIOError(
                f"dimension mismatch: {paths[0]} is {first.shape}, {path} is {frame.shape}"
            )
    return frames


def quantize_u8(img):
    """Round-half-up 8-bit quantization of a [0,1] grid."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_png(path, img):
    """Write a [0,1] grid as an 8-bit PNG (1 or 3 channels)."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    data = quantize_u8(img)
    if data.shape[2] == 1:
        data = data[:, :, 0]
    elif data.shape[2] == 3:
        data = data[:, :, ::-1]  # RGB -> BGR
    else:
        raise FrameIOError(f"{path}: cannot encode {data.shape[2]} channels")
    if not cv2.imwrite(path, data):
        raise FrameIOError(f"{path}: PNG encode failed")
