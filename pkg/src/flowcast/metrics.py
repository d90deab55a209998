"""Image quality metrics (PSNR, SSIM, MS-SSIM) and flow endpoint error.

MS-SSIM follows the standard 5-scale construction: 11x11 Gaussian window
(sigma 1.5), K1=0.01, K2=0.03, scale weights
0.0448/0.2856/0.3001/0.2363/0.1333, contrast-structure terms at every
scale and the luminance term at the coarsest. Images smaller than 176 px
per side use as many scales as fit (min side >= 11 after halving) with
the leading weights renormalized. Contrast-structure values are clamped
at zero before the geometric combination so anticorrelated inputs cannot
produce NaN.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import as_grid, check_congruent

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WIN_SIZE = 11
_WIN_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03
_C1 = (_K1 * 1.0) ** 2
_C2 = (_K2 * 1.0) ** 2


def interior(a, margin):
    """Crop ``margin`` pixels from every side; the result must be non-empty."""
    m = int(margin)
    if m < 0:
        raise ValueError(f"margin must be >= 0, got {m}")
    h, w = a.shape[:2]
    if h - 2 * m < 1 or w - 2 * m < 1:
        raise ValueError(f"margin {m} leaves no interior for shape {a.shape}")
    return a[m : h - m, m : w - m]


def psnr(a, b, margin=0):
    """Peak signal-to-noise ratio in dB over the interior, peak 1.0.

    Identical interiors return +inf.
    """
    a = as_grid(a)
    b = as_grid(b)
    check_congruent(a, b, "psnr")
    da = interior(a, margin)
    db = interior(b, margin)
    mse = float(np.mean((da - db) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def mean_epe(f_est, f_true, margin=0):
    """Mean endpoint error (px) between two flow fields over the interior."""
    f_est = as_grid(f_est, channels=2)
    f_true = as_grid(f_true, channels=2)
    check_congruent(f_est, f_true, "mean_epe")
    d = interior(f_est - f_true, margin)
    return float(np.mean(np.hypot(d[:, :, 0], d[:, :, 1])))


def _gaussian_window(size=_WIN_SIZE, sigma=_WIN_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


_WINDOW = _gaussian_window()


def _filter_valid(x, win=_WINDOW):
    """Separable 'valid' correlation of a 2-D array with a 1-D window."""
    n = win.size
    h, w = x.shape
    rows = np.zeros((h, w - n + 1))
    for i in range(n):
        rows += win[i] * x[:, i : i + w - n + 1]
    out = np.zeros((h - n + 1, w - n + 1))
    for i in range(n):
        out += win[i] * rows[i : i + h - n + 1]
    return out


def _ssim_channel(a, b):
    """(luminance*cs mean, cs mean) for one 2-D channel pair."""
    mu1 = _filter_valid(a)
    mu2 = _filter_valid(b)
    s11 = _filter_valid(a * a) - mu1 * mu1
    s22 = _filter_valid(b * b) - mu2 * mu2
    s12 = _filter_valid(a * b) - mu1 * mu2
    lum = (2.0 * mu1 * mu2 + _C1) / (mu1 * mu1 + mu2 * mu2 + _C1)
    cs = (2.0 * s12 + _C2) / (s11 + s22 + _C2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ssim(a, b):
    """Single-scale SSIM, averaged over channels."""
    a = as_grid(a)
    b = as_grid(b)
    check_congruent(a, b, "ssim")
    if min(a.shape[0], a.shape[1]) < _WIN_SIZE:
        raise ValueError(f"image too small for the {_WIN_SIZE}x{_WIN_SIZE} SSIM window: {a.shape}")
    vals = [_ssim_channel(a[:, :, c], b[:, :, c])[0] for c in range(a.shape[2])]
    return float(np.mean(vals))


def _downsample2(x):
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    return x[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def usable_scales(h, w, max_scales=len(MS_SSIM_WEIGHTS)):
    """Scales whose coarsest image still fits the 11x11 window."""
    s = 1
    while s < max_scales and min(h, w) // (2 ** s) >= _WIN_SIZE:
        s += 1
    return s


def ms_ssim(a, b):
    """Multi-scale SSIM, averaged over channels."""
    a = as_grid(a)
    b = as_grid(b)
    check_congruent(a, b, "ms_ssim")
    h, w, c = a.shape
    if min(h, w) < _WIN_SIZE:
        raise ValueError(f"image too small for even one MS-SSIM scale: {a.shape}")
    scales = usable_scales(h, w)
    weights = np.asarray(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    per_channel = []
    for ch in range(c):
        x, y = a[:, :, ch], b[:, :, ch]
        score = 1.0
        for s in range(scales):
            lum_cs, cs = _ssim_channel(x, y)
            if s == scales - 1:
                score *= max(lum_cs, 0.0) ** weights[s]
            else:
                score *= max(cs, 0.0) ** weights[s]
                x, y = _downsample2(x), _downsample2(y)
        per_channel.append(score)
    return float(np.mean(per_channel))


@dataclass
class FrameMetrics:
    index: int
    psnr: float
    ssim: float
    ms_ssim: float
    epe: float = None


@dataclass
class MetricsReport:
    """Per-frame quality scores for a prediction run."""

    frames: list = field(default_factory=list)
    margin: int = 0

    def add(self, index, psnr_db, ssim_val, ms_ssim_val, epe=None):
        self.frames.append(FrameMetrics(index, psnr_db, ssim_val, ms_ssim_val, epe))

    def _mean(self, key):
        vals = [getattr(f, key) for f in self.frames if getattr(f, key) is not None]
        return float(np.mean(vals)) if vals else None

    def to_text(self):
        lines = [f"margin = {self.margin}", f"frames = {len(self.frames)}"]
        for f in self.frames:
            lines.append(f"frame_{f.index:04d}.psnr_db = {f.psnr:.6f}")
            lines.append(f"frame_{f.index:04d}.ssim = {f.ssim:.6f}")
            lines.append(f"frame_{f.index:04d}.ms_ssim = {f.ms_ssim:.6f}")
            if f.epe is not None:
                lines.append(f"frame_{f.index:04d}.epe_px = {f.epe:.6f}")
        for key in ("psnr", "ssim", "ms_ssim", "epe"):
            mean = self._mean(key)
            if mean is not None:
                lines.append(f"mean.{key} = {mean:.6f}")
        return "\n".join(lines) + "\n"

    def to_records(self):
        recs = []
        for f in self.frames:
            rec = {
                "index": f.index,
                "psnr_db": f.psnr,
                "ssim": f.ssim,
                "ms_ssim": f.ms_ssim,
            }
            if f.epe is not None:
                rec["epe_px"] = f.epe
            recs.append(rec)
        return recs

    def save(self, text_path, json_path):
        with open(text_path, "w") as fh:
            fh.write(self.to_text())
        with open(json_path, "w") as fh:
            json.dump({"margin": self.margin, "frames": self.to_records()}, fh, indent=2, sort_keys=True)
            fh.write("\n")
