"""End-to-end prediction runs: frames in, artifacts out.

Artifacts per run: pred_NNNN.png for each predicted frame, optional
flow_NNNN.png visualizations and trace_NNNN.csv loss traces, plus
metrics.txt / metrics.json whenever held-out ground truth exists (extra
input frames or a synthetic scene).
"""

import csv
import math
import os

import numpy as np

from .config import RunConfig
from .flowviz import flow_to_color
from .imgio import load_frames, save_png
from .interp import get_backend
from .metrics import MetricsReport, mean_epe, ms_ssim, psnr, ssim
from .predictor import predict_sequence
from .scenes import generate_scene, prediction_target_flow


def _input_window(frames, horizon):
    """Pick (x_prev, x_curr) and the held-out ground-truth frames.

    The pair is the last two *observed* frames: when extra frames exist
    they are held out for scoring, so with n frames and horizon h the
    inputs are frames[n-h-2 : n-h] (clamped) and everything after them is
    ground truth.
    """
    n = len(frames)
    start = max(0, n - horizon - 2)
    held = frames[start + 2 :]
    return frames[start], frames[start + 1], held


def _default_margin(flows, horizon):
    peak = max((float(np.abs(f).max()) for f in flows), default=0.0)
    return int(math.ceil(peak * horizon)) + 2


def _write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "total", "img", "cons"])
        for i, (tot, img, cons) in enumerate(zip(trace.total, trace.img, trace.cons)):
            writer.writerow([i, f"{tot:.12g}", f"{img:.12g}", f"{cons:.12g}"])


def run(config: RunConfig):
    """Execute one prediction run; returns 0 on success.

    Errors surface as the shared exception types, which the CLI maps to
    exit codes.
    """
    os.makedirs(config.outdir, exist_ok=True)
    backend_fn = get_backend(config.backend)

    gt_flows = None
    scene = config.scene
    if scene is not None:
        frames, _ = generate_scene(scene)
        x_prev, x_curr, held = _input_window(frames, config.horizon)
        first_pred_index = len(frames) - len(held)
        gt_flows = [
            prediction_target_flow(scene, first_pred_index - 1 + k)
            for k in range(config.horizon)
        ]
        for i, frame in enumerate(frames[: first_pred_index]):
            save_png(os.path.join(config.outdir, f"input_{i:04d}.png"), frame)
        for i, frame in enumerate(held):
            save_png(os.path.join(config.outdir, f"gt_{i + 1:04d}.png"), frame)
    else:
        frames = load_frames(config.frames)
        x_prev, x_curr, held = _input_window(frames, config.horizon)

    results = []
    predicted = predict_sequence(
        x_prev,
        x_curr,
        config.horizon,
        config.optim,
        config.backend_cfg,
        collect=lambda frame, flow, trace: results.append((frame, flow, trace)),
        backend_fn=backend_fn,
    )

    max_mag = max(max(float(np.abs(flow).max()) for _, flow, _ in results), 1e-6)
    for k, (frame, flow, trace) in enumerate(results, start=1):
        save_png(os.path.join(config.outdir, f"pred_{k:04d}.png"), frame)
        if config.emit_flow:
            save_png(
                os.path.join(config.outdir, f"flow_{k:04d}.png"),
                flow_to_color(flow, max_mag),
            )
        if config.emit_trace:
            _write_trace(os.path.join(config.outdir, f"trace_{k:04d}.csv"), trace)

    if held:
        margin = _default_margin([flow for _, flow, _ in results], config.horizon)
        h, w = predicted[0].shape[:2]
        margin = min(margin, (min(h, w) - 1) // 4)  # keep a usable interior
        report = MetricsReport(margin=margin)
        for k, (gt, (frame, flow, _)) in enumerate(zip(held, results), start=1):
            epe = None
            if gt_flows is not None:
                epe = mean_epe(flow, gt_flows[k - 1], margin)
            report.add(k, psnr(frame, gt, margin), ssim(frame, gt), ms_ssim(frame, gt), epe)
        report.save(
            os.path.join(config.outdir, "metrics.txt"),
            os.path.join(config.outdir, "metrics.json"),
        )
    return 0
