"""Run configuration: flat key=value config files with CLI overrides.

A config file holds one ``key = value`` pair per line (``#`` comments,
blank lines allowed). Every key can also be given as a CLI flag; flags
win. ``build_run_config`` validates the merged mapping into a RunConfig.
"""

from dataclasses import dataclass, field

from .errors import ConfigError
from .interp import BackendConfig
from .predictor import INPAINT_CADENCES, LOSS_VARIANTS, OptimConfig
from .scenes import SCENE_KINDS, SceneSpec

THREADS_ENV_VAR = "FLOWCAST_THREADS"


def _parse_bool(s):
    low = str(s).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_vec(s, n, key):
    parts = [p for p in str(s).replace(",", " ").split() if p]
    if len(parts) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {s!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as err:
        raise ConfigError(f"{key}: {err}") from None


def _parse_paths(s):
    if isinstance(s, (list, tuple)):
        return list(s)
    return [p for p in str(s).replace(",", " ").split() if p]


_KEY_TYPES = {
    "frames": "paths",
    "out": str,
    "horizon": int,
    "seed": int,
    "emit_flow": "bool",
    "emit_trace": "bool",
    # optimizer
    "iterations": int,
    "lr": float,
    "w_img": float,
    "w_cons": float,
    "alpha": float,
    "beta1": float,
    "beta2": float,
    "eps": float,
    "loss_variant": str,
    "inpaint_cadence": str,
    "init": str,
    "noise_sigma": float,
    "early_stop": "bool",
    # backend
    "backend": str,
    "pyramid_levels": int,
    "hs_iterations": int,
    "hs_lambda": float,
    "differentiable_flow": "bool",
    # synthetic scene
    "kind": str,
    "height": int,
    "width": int,
    "channels": int,
    "scene_frames": int,
    "velocity": "vec2",
    "angular_deg": float,
    "fg_velocity": "vec2",
    "fg_rect": "vec4",
    "waves": int,
}


@dataclass
class RunConfig:
    frames: list = None
    scene: SceneSpec = None
    horizon: int = 1
    outdir: str = "."
    seed: int = 0
    emit_flow: bool = False
    emit_trace: bool = False
    backend: str = "classical"
    optim: OptimConfig = field(default_factory=OptimConfig)
    backend_cfg: BackendConfig = field(default_factory=BackendConfig)

    def __post_init__(self):
        if (self.frames is None) == (self.scene is None):
            raise ConfigError("exactly one of frame paths or a scene spec must be given")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")


def parse_config_file(path):
    """Read a flat key=value file into a string mapping."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    for lineno, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, _, val = body.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _KEY_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = val
    return values


def _coerce(key, value):
    kind = _KEY_TYPES[key]
    try:
        if kind == "bool":
            return value if isinstance(value, bool) else _parse_bool(value)
        if kind == "vec2":
            return value if isinstance(value, tuple) else _parse_vec(value, 2, key)
        if kind == "vec4":
            return value if isinstance(value, tuple) else _parse_vec(value, 4, key)
        if kind == "paths":
            return _parse_paths(value)
        return kind(value)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{key}: {err}") from None


def merge_values(file_values, flag_values):
    """Typed merge of config-file values and CLI flags; flags win."""
    merged = {}
    for key, val in (file_values or {}).items():
        merged[key] = _coerce(key, val)
    for key, val in (flag_values or {}).items():
        if val is None:
            continue
        if key not in _KEY_TYPES:
            raise ConfigError(f"unknown option {key!r}")
        merged[key] = _coerce(key, val)
    return merged


def build_run_config(values, want_scene):
    """Construct a validated RunConfig from a merged option mapping."""
    values = dict(values)
    seed = values.pop("seed", 0)
    horizon = values.pop("horizon", 1)
    outdir = values.pop("out", ".")
    emit_flow = values.pop("emit_flow", False)
    emit_trace = values.pop("emit_trace", False)
    backend = values.pop("backend", "classical")

    optim_kwargs = {}
    for key in ("iterations", "lr", "w_img", "w_cons", "alpha", "beta1", "beta2", "eps",
                "loss_variant", "inpaint_cadence", "init", "noise_sigma", "early_stop"):
        if key in values:
            optim_kwargs[key] = values.pop(key)
    backend_kwargs = {}
    for key in ("pyramid_levels", "hs_iterations", "hs_lambda", "differentiable_flow"):
        if key in values:
            backend_kwargs[key] = values.pop(key)

    frames = values.pop("frames", None)
    scene = None
    scene_keys = {
        "kind": "kind",
        "height": "height",
        "width": "width",
        "channels": "channels",
        "scene_frames": "frame_count",
        "velocity": "velocity",
        "angular_deg": "angular_deg",
        "fg_velocity": "fg_velocity",
        "fg_rect": "fg_rect",
        "waves": "waves",
    }
    scene_kwargs = {}
    for key, attr in scene_keys.items():
        if key in values:
            scene_kwargs[attr] = values.pop(key)
    if values:
        raise ConfigError(f"unused option(s): {sorted(values)}")

    try:
        optim = OptimConfig(seed=seed, **optim_kwargs)
        backend_cfg = BackendConfig(**backend_kwargs)
        if want_scene:
            if frames is not None:
                raise ConfigError("synth runs take a scene spec, not frame paths")
            scene_kwargs.setdefault("kind", "translate")
            scene_kwargs["seed"] = seed
            # keep enough frames around to score every predicted step
            spec = SceneSpec(**scene_kwargs)
            if spec.frame_count < horizon + 2:
                scene_kwargs["frame_count"] = horizon + 2
                spec = SceneSpec(**scene_kwargs)
            scene = spec
            frames = None
        else:
            if scene_kwargs:
                raise ConfigError(f"scene option(s) {sorted(scene_kwargs)} are only valid for synth runs")
            if not frames:
                raise ConfigError("no input frames given")
        return RunConfig(
            frames=frames,
            scene=scene,
            horizon=horizon,
            outdir=outdir,
            seed=seed,
            emit_flow=emit_flow,
            emit_trace=emit_trace,
            backend=backend,
            optim=optim,
            backend_cfg=backend_cfg,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None


def load_run_config(config_path, flag_values, want_scene):
    file_values = parse_config_file(config_path) if config_path else {}
    return build_run_config(merge_values(file_values, flag_values), want_scene)
