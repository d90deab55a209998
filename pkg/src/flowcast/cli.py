"""Command-line interface.

Subcommands: ``predict`` (image frames -> future frames), ``synth``
(synthetic oracle scene -> prediction + metrics), ``gradcheck``
(finite-difference suite), ``metrics`` (score existing frame pairs).
Exit codes: 0 ok, 1 check failure, 2 config error, 3 I/O error,
4 numerical divergence.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .config import THREADS_ENV_VAR, load_run_config
from .errors import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_IO,
    EXIT_OK,
    ConfigError,
    DivergenceError,
    FrameIOError,
)
from .gradcheck import format_results, run_suite
from .imgio import load_frame
from .metrics import MetricsReport, ms_ssim, psnr, ssim
from .runner import run


def _add_common_options(p):
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--horizon", type=int, help="number of future frames to predict")
    p.add_argument("--seed", type=int, help="random seed (noise init, scene textures)")
    p.add_argument("--emit-flow", dest="emit_flow", action="store_const", const=True,
                   help="write flow visualizations")
    p.add_argument("--emit-trace", dest="emit_trace", action="store_const", const=True,
                   help="write per-iteration loss traces")
    p.add_argument("--init", choices=("flow", "zero", "noise"), help="flow initialization mode")
    p.add_argument("--iterations", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--w-img", dest="w_img", type=float)
    p.add_argument("--w-cons", dest="w_cons", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--loss-variant", dest="loss_variant",
                   choices=("img_l1", "img_mse", "interp_target"))
    p.add_argument("--inpaint-cadence", dest="inpaint_cadence",
                   choices=("per_iteration", "final_only", "off"))
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--early-stop", dest="early_stop", action="store_const", const=True)
    p.add_argument("--backend", help="interpolation backend name (default: classical)")
    p.add_argument("--pyramid-levels", dest="pyramid_levels", type=int)
    p.add_argument("--hs-iterations", dest="hs_iterations", type=int)
    p.add_argument("--hs-lambda", dest="hs_lambda", type=float)


_RUN_KEYS = (
    "out", "horizon", "seed", "emit_flow", "emit_trace", "init", "iterations", "lr",
    "w_img", "w_cons", "alpha", "loss_variant", "inpaint_cadence", "noise_sigma",
    "early_stop", "backend", "pyramid_levels", "hs_iterations", "hs_lambda",
)


def _flag_values(args, extra=()):
    keys = _RUN_KEYS + tuple(extra)
    return {k: getattr(args, k, None) for k in keys}


def _cmd_predict(args):
    flags = _flag_values(args)
    flags["frames"] = args.frames or None
    cfg = load_run_config(args.config, flags, want_scene=False)
    return run(cfg)


def _cmd_synth(args):
    flags = _flag_values(
        args,
        extra=("kind", "height", "width", "channels", "scene_frames", "velocity",
               "angular_deg", "fg_velocity", "fg_rect", "waves"),
    )
    cfg = load_run_config(args.config, flags, want_scene=True)
    return run(cfg)


def _cmd_gradcheck(args):
    results = run_suite(seed=args.seed if args.seed is not None else 7)
    print(format_results(results))
    return EXIT_OK if all(r.passed for r in results) else 1


def _score_pair(pred_path, ref_path):
    pred = load_frame(pred_path)
    ref = load_frame(ref_path)
    return psnr(pred, ref), ssim(pred, ref), ms_ssim(pred, ref)


def _cmd_metrics(args):
    paths = args.images
    if len(paths) < 2 or len(paths) % 2 != 0:
        raise ConfigError("metrics needs an even number of images: PRED REF [PRED REF ...]")
    pairs = [(paths[i], paths[i + 1]) for i in range(0, len(paths), 2)]
    workers = os.environ.get(THREADS_ENV_VAR)
    try:
        workers = int(workers) if workers else min(len(pairs), os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR} must be an integer") from None
    if workers < 1:
        raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1")
    report = MetricsReport(margin=0)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        scores = list(pool.map(lambda pr: _score_pair(*pr), pairs))
    for i, (p, s, m) in enumerate(scores, start=1):
        report.add(i, p, s, m)
    sys.stdout.write(report.to_text())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        report.save(os.path.join(args.out, "metrics.txt"), os.path.join(args.out, "metrics.json"))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flowcast",
        description="Future-frame prediction by test-time optimization of a backward flow "
        "through a frozen differentiable frame-interpolation backend.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="predict future frames from an image sequence")
    p.add_argument("--frames", nargs="*", help="input frames, oldest first (PNG or PPM)")
    _add_common_options(p)
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic scene, predict, and score")
    _add_common_options(p)
    p.add_argument("--kind", choices=("static", "translate", "rotate", "two_layer_parallax"))
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--scene-frames", dest="scene_frames", type=int)
    p.add_argument("--velocity", help="background velocity 'vx,vy' in px/frame")
    p.add_argument("--angular-deg", dest="angular_deg", type=float)
    p.add_argument("--fg-velocity", dest="fg_velocity", help="foreground velocity 'vx,vy'")
    p.add_argument("--fg-rect", dest="fg_rect", help="foreground box 'x,y,w,h' at frame 0")
    p.add_argument("--waves", type=int)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("metrics", help="score PRED/REF image pairs")
    p.add_argument("images", nargs="+", metavar="IMG")
    p.add_argument("--out", help="also write metrics.txt/metrics.json here")
    p.set_defaults(fn=_cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FrameIOError as err:
        print(f"io error: {err}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
