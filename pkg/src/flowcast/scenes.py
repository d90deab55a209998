"""Synthetic scenes with analytically known ground-truth flow.

Textures are sums of random low-frequency sinusoids evaluated at
continuous coordinates, so every frame is an exact point sample of a
band-limited function: motion is exact by construction, bilinear
resampling error stays small, and integer-velocity translations
round-trip through the warp bit-for-bit.
"""

from dataclasses import dataclass, field

import numpy as np

SCENE_KINDS = ("static", "translate", "rotate", "two_layer_parallax")

_TEXTURE_SPAN = 0.45  # sum of |amplitudes|; keeps values inside [0.05, 0.95]
_MIN_WAVELENGTH = 8.0


@dataclass
class SceneSpec:
    kind: str = "translate"
    height: int = 64
    width: int = 64
    channels: int = 1
    frame_count: int = 5
    seed: int = 0
    velocity: tuple = (2.0, 1.0)  # (vx, vy) px/frame; background layer for parallax
    angular_deg: float = 2.0  # rotation per frame about the image center
    fg_velocity: tuple = (-2.0, 1.0)
    fg_rect: tuple = None  # (x, y, w, h) at frame 0; default: centered 40% box
    waves: int = 24

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}; expected one of {SCENE_KINDS}")
        if self.frame_count < 3:
            raise ValueError(f"frame_count must be >= 3, got {self.frame_count}")
        if self.height < 8 or self.width < 8:
            raise ValueError(f"scene must be at least 8x8, got {self.height}x{self.width}")
        motion = (*self.velocity, self.angular_deg, *self.fg_velocity)
        if not np.isfinite(motion).all():
            raise ValueError(f"non-finite motion parameters: {motion}")

    def rect_at(self, k):
        """Foreground box (x0, y0, x1, y1) at frame k."""
        if self.fg_rect is None:
            bw, bh = 0.4 * self.width, 0.4 * self.height
            x, y = (self.width - bw) / 2.0, (self.height - bh) / 2.0
        else:
            x, y, bw, bh = self.fg_rect
        fvx, fvy = self.fg_velocity
        return (x + k * fvx, y + k * fvy, x + k * fvx + bw, y + k * fvy + bh)

    def max_displacement(self):
        """Largest per-frame pixel displacement anywhere in the scene."""
        if self.kind == "static":
            return 0.0
        if self.kind == "translate":
            return float(np.hypot(*self.velocity))
        if self.kind == "rotate":
            r = 0.5 * float(np.hypot(self.height - 1, self.width - 1))
            return 2.0 * r * abs(np.sin(np.deg2rad(self.angular_deg) / 2.0))
        return max(float(np.hypot(*self.velocity)), float(np.hypot(*self.fg_velocity)))


@dataclass
class _Texture:
    u: np.ndarray  # (C, J) spatial frequencies, cycles/px
    v: np.ndarray
    phase: np.ndarray
    amp: np.ndarray

    def eval(self, xs, ys):
        """Sample at continuous coordinates; xs, ys are (H, W)."""
        args = 2.0 * np.pi * (
            xs[:, :, None, None] * self.u + ys[:, :, None, None] * self.v
        ) + self.phase
        return 0.5 + (self.amp * np.cos(args)).sum(axis=3)


def _make_texture(rng, channels, waves, min_side):
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(channels, waves))
    lam = np.exp(
        rng.uniform(np.log(_MIN_WAVELENGTH), np.log(max(min_side, _MIN_WAVELENGTH + 1)), size=(channels, waves))
    )
    freq = 1.0 / lam
    amp = rng.uniform(0.5, 1.0, size=(channels, waves))
    amp *= _TEXTURE_SPAN / amp.sum(axis=1, keepdims=True)
    return _Texture(
        u=freq * np.cos(theta),
        v=freq * np.sin(theta),
        phase=rng.uniform(0.0, 2.0 * np.pi, size=(channels, waves)),
        amp=amp,
    )


def _grid_coords(h, w):
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return xs, ys


def _center(spec):
    return (spec.width - 1) / 2.0, (spec.height - 1) / 2.0


def _rotated_coords(spec, xs, ys, angle_rad):
    cx, cy = _center(spec)
    ca, sa = np.cos(angle_rad), np.sin(angle_rad)
    dx, dy = xs - cx, ys - cy
    return cx + ca * dx + sa * dy, cy - sa * dx + ca * dy  # inverse rotation


def rotation_flow(spec, angle_rad, xs=None, ys=None):
    """Displacement field of a rotation by ``angle_rad`` about the center."""
    if xs is None:
        xs, ys = _grid_coords(spec.height, spec.width)
    cx, cy = _center(spec)
    ca, sa = np.cos(angle_rad), np.sin(angle_rad)
    dx, dy = xs - cx, ys - cy
    flow = np.empty((spec.height, spec.width, 2))
    flow[:, :, 0] = (ca * dx - sa * dy) - dx
    flow[:, :, 1] = (sa * dx + ca * dy) - dy
    return flow


def _inside_rect(xs, ys, rect):
    x0, y0, x1, y1 = rect
    return (xs >= x0) & (xs < x1) & (ys >= y0) & (ys < y1)


def _constant_flow(h, w, vx, vy):
    flow = np.empty((h, w, 2))
    flow[:, :, 0] = vx
    flow[:, :, 1] = vy
    return flow


def generate_scene(spec):
    """Render frames and ground-truth forward flows.

    Returns (frames, flows) with len(flows) = len(frames) - 1;
    flows[k](p) is the displacement of frame k's pixel p toward frame
    k+1, i.e. backward_warp(frame_{k+1}, flows[k]) ~= frame_k.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    xs, ys = _grid_coords(h, w)
    tex = _make_texture(rng, spec.channels, spec.waves, min(h, w))
    vx, vy = spec.velocity
    frames, flows = [], []

    if spec.kind == "two_layer_parallax":
        fg_tex = _make_texture(rng, spec.channels, spec.waves, min(h, w))
        fvx, fvy = spec.fg_velocity

    for k in range(spec.frame_count):
        if spec.kind == "static":
            frames.append(tex.eval(xs, ys) if k == 0 else frames[0].copy())
        elif spec.kind == "translate":
            frames.append(tex.eval(xs - k * vx, ys - k * vy))
        elif spec.kind == "rotate":
            rx, ry = _rotated_coords(spec, xs, ys, k * np.deg2rad(spec.angular_deg))
            frames.append(tex.eval(rx, ry))
        else:
            bg = tex.eval(xs - k * vx, ys - k * vy)
            fg = fg_tex.eval(xs - k * fvx, ys - k * fvy)
            inside = _inside_rect(xs, ys, spec.rect_at(k))[:, :, None]
            frames.append(np.where(inside, fg, bg))

    for k in range(spec.frame_count - 1):
        if spec.kind == "static":
            flows.append(np.zeros((h, w, 2)))
        elif spec.kind == "translate":
            flows.append(_constant_flow(h, w, vx, vy))
        elif spec.kind == "rotate":
            flows.append(rotation_flow(spec, np.deg2rad(spec.angular_deg), xs, ys))
        else:
            fg_flow = _constant_flow(h, w, *spec.fg_velocity)
            bg_flow = _constant_flow(h, w, vx, vy)
            inside = _inside_rect(xs, ys, spec.rect_at(k))[:, :, None]
            flows.append(np.where(inside, fg_flow, bg_flow))
    return frames, flows


def prediction_target_flow(spec, k):
    """Ground-truth backward flow from frame k+1 to frame k.

    This is what the predictor's optimized flow should converge to when
    frame k+1 is the predicted one: x_{k+1}(p) = x_k(p + flow(p)).
    """
    h, w = spec.height, spec.width
    if spec.kind == "static":
        return np.zeros((h, w, 2))
    if spec.kind == "translate":
        return _constant_flow(h, w, -spec.velocity[0], -spec.velocity[1])
    if spec.kind == "rotate":
        return rotation_flow(spec, -np.deg2rad(spec.angular_deg))
    xs, ys = _grid_coords(h, w)
    inside = _inside_rect(xs, ys, spec.rect_at(k + 1))[:, :, None]
    fg = _constant_flow(h, w, -spec.fg_velocity[0], -spec.fg_velocity[1])
    bg = _constant_flow(h, w, -spec.velocity[0], -spec.velocity[1])
    return np.where(inside, fg, bg)
