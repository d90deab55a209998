"""Finite-difference verification of every differentiable operation.

Each check builds a scalar objective twice: once on a tape for the
reverse-mode gradient, and once as a plain forward function differenced
centrally (eps 1e-5). The comparison metric is
max |g_ad - g_fd| / max(1, |g_fd|). Test inputs are sampled away from the
|x| and bilinear kinks so the numerical derivative is trustworthy.
"""

from dataclasses import dataclass

import numpy as np

from . import tape as T
from .flow_ops import fb_discrepancy
from .interp import BackendConfig, interpolate
from .predictor import OptimConfig, total_loss
from .warping import backward_warp

CORE_TOL = 1e-4
COMPOSITE_TOL = 1e-3
FD_EPS = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self):
        return self.max_rel_err < self.tol

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: max_rel_err={self.max_rel_err:.3e} tol={self.tol:.0e}"


def finite_diff(fn, x, eps=FD_EPS):
    """Central finite differences of scalar fn w.r.t. every element of x."""
    g = np.zeros_like(x)
    flat = g.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        hi = fn(x)
        xf[i] = orig - eps
        lo = fn(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * eps)
    return g


def max_rel_err(g_ad, g_fd):
    return float(np.max(np.abs(g_ad - g_fd) / np.maximum(1.0, np.abs(g_fd))))


def _check(name, build, inputs, wrt, tol):
    """build(tape, *nodes) -> scalar node; differentiate w.r.t. inputs[wrt]."""
    tape = T.Tape()
    nodes = [tape.leaf(x) for x in inputs]
    root = build(tape, *nodes)
    tape.backward(root)
    g_ad = tape.grad(nodes[wrt])

    def forward(x):
        scratch = T.Tape()
        ns = [scratch.leaf(x if i == wrt else inp) for i, inp in enumerate(inputs)]
        return build(scratch, *ns).item()

    g_fd = finite_diff(forward, inputs[wrt].copy())
    return CheckResult(name, max_rel_err(g_ad, g_fd), tol)


def _offset_randoms(rng, shape, lo=0.3, hi=1.0):
    return rng.uniform(lo, hi, size=shape)


def _signed_randoms(rng, shape, lo=0.3, hi=1.0):
    return rng.uniform(lo, hi, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _kink_free_flow(rng, h, w, reach=1):
    """Flow whose sample coordinates stay >= 0.2 px from the bilinear kinks."""
    frac = rng.uniform(0.2, 0.8, size=(h, w, 2))
    whole = rng.integers(-reach, reach, size=(h, w, 2)).astype(float)
    return whole + frac


def run_suite(seed=7):
    """Run every gradient check; returns a list of CheckResult."""
    rng = np.random.default_rng(seed)
    results = []
    sh = (8, 8, 2)

    a = _offset_randoms(rng, sh)
    b = _offset_randoms(rng, sh, 0.4, 1.2)
    results.append(_check("add lhs", lambda t, x, y: T.mean_abs(T.add(x, y)), [a, b], 0, CORE_TOL))
    results.append(_check("add rhs", lambda t, x, y: T.mean_abs(T.add(x, y)), [a, b], 1, CORE_TOL))
    results.append(
        _check("sub lhs", lambda t, x, y: T.mean_abs(T.sub(x, y) + 3.0), [a, b], 0, CORE_TOL)
    )
    results.append(
        _check("sub rhs", lambda t, x, y: T.mean_abs(T.sub(x, y) + 3.0), [a, b], 1, CORE_TOL)
    )
    results.append(_check("mul lhs", lambda t, x, y: T.mean_abs(T.mul(x, y)), [a, b], 0, CORE_TOL))
    results.append(_check("mul rhs", lambda t, x, y: T.mean_abs(T.mul(x, y)), [a, b], 1, CORE_TOL))
    results.append(_check("div num", lambda t, x, y: T.mean_abs(T.div(x, y)), [a, b], 0, CORE_TOL))
    results.append(_check("div den", lambda t, x, y: T.mean_abs(T.div(x, y)), [a, b], 1, CORE_TOL))
    results.append(
        _check("scalar ops", lambda t, x: T.mean_abs(2.5 * x - 0.75 + x / 4.0 + (1.0 / (x + 2.0))), [a], 0, CORE_TOL)
    )

    s = _signed_randoms(rng, sh)
    results.append(_check("abs", lambda t, x: T.mean_abs(T.absval(x)), [s], 0, CORE_TOL))
    results.append(_check("square", lambda t, x: T.mean_abs(T.square(x)), [s], 0, CORE_TOL))
    results.append(_check("sigmoid", lambda t, x: T.mean_abs(T.sigmoid(x)), [s], 0, CORE_TOL))
    results.append(_check("mean_abs", lambda t, x: T.mean_abs(x), [s], 0, CORE_TOL))

    kernel = rng.normal(size=(3, 3))
    kernel /= np.abs(kernel).sum()
    results.append(
        _check("conv2d", lambda t, x: T.mean_abs(T.conv2d(x, kernel) + 2.0), [a], 0, CORE_TOL)
    )
    results.append(
        _check(
            "resize up",
            lambda t, x: T.mean_abs(T.resize_bilinear(x, 13, 11)),
            [a],
            0,
            CORE_TOL,
        )
    )
    results.append(
        _check(
            "resize down",
            lambda t, x: T.mean_abs(T.resize_bilinear(x, 5, 6)),
            [a],
            0,
            CORE_TOL,
        )
    )
    a3 = _offset_randoms(rng, (8, 8, 3))
    results.append(
        _check(
            "channel_dot",
            lambda t, x: T.mean_abs(T.channel_dot(x, [0.3, 0.5, 0.2])),
            [a3],
            0,
            CORE_TOL,
        )
    )
    a1 = _offset_randoms(rng, (8, 8, 1))
    results.append(
        _check(
            "repeat/slice/concat",
            lambda t, x: T.mean_abs(
                T.channel_slice(T.concat_channels([T.repeat_channels(x, 3), x]), 1, 3)
            ),
            [a1],
            0,
            CORE_TOL,
        )
    )

    img = _offset_randoms(rng, (8, 8, 3))
    flow = _kink_free_flow(rng, 8, 8)
    target = rng.uniform(2.0, 3.0, size=(8, 8, 3))
    results.append(
        _check(
            "backward_warp wrt image",
            lambda t, x, f: T.mean_abs(backward_warp(x, f) - t.constant(target)),
            [img, flow],
            0,
            CORE_TOL,
        )
    )
    results.append(
        _check(
            "backward_warp wrt flow",
            lambda t, x, f: T.mean_abs(backward_warp(x, f) - t.constant(target)),
            [img, flow],
            1,
            CORE_TOL,
        )
    )

    fb = _kink_free_flow(rng, 8, 8)
    ff = _kink_free_flow(rng, 8, 8)
    results.append(
        _check(
            "fb_discrepancy wrt backward flow",
            lambda t, x, y: T.mean_abs(fb_discrepancy(x, y) + 6.0),
            [fb, ff],
            0,
            CORE_TOL,
        )
    )
    results.append(
        _check(
            "fb_discrepancy wrt forward flow",
            lambda t, x, y: T.mean_abs(fb_discrepancy(x, y) + 6.0),
            [fb, ff],
            1,
            CORE_TOL,
        )
    )

    small_backend = BackendConfig(pyramid_levels=2, hs_iterations=6)
    prev16 = _offset_randoms(rng, (16, 16, 1), 0.2, 0.8)
    next16 = np.clip(prev16 + rng.normal(0.0, 0.05, size=prev16.shape), 0.05, 0.95)
    target16 = rng.uniform(2.0, 3.0, size=(16, 16, 1))

    def interp_loss(t, xp, xn):
        out = interpolate(xp, xn, small_backend)
        i_next = backward_warp(xn, out.f_fwd)
        return T.mean_abs(i_next - t.constant(target16))

    results.append(
        _check("interpolate wrt next frame", interp_loss, [prev16, next16], 1, COMPOSITE_TOL)
    )

    ocfg = OptimConfig(iterations=1)
    prev12 = _offset_randoms(rng, (12, 12, 1), 0.2, 0.8)
    curr12 = np.clip(prev12 + rng.normal(0.0, 0.05, size=prev12.shape), 0.05, 0.95)
    flow12 = _kink_free_flow(rng, 12, 12) * 0.5

    def loss_build(t, f):
        return total_loss(prev12, curr12, f, ocfg, small_backend)

    results.append(_check("total_loss wrt flow", loss_build, [flow12], 0, COMPOSITE_TOL))
    return results


def format_results(results):
    lines = [r.line() for r in results]
    worst = max(results, key=lambda r: r.max_rel_err / r.tol)
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} gradient checks passed (worst: {worst.name})")
    return "\n".join(lines)
