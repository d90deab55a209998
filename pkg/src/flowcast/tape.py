"""Reverse-mode autodiff tape over dense grids.

The op vocabulary is closed on purpose: elementwise arithmetic, a few
pointwise nonlinearities, fixed-kernel convolution, bilinear resize,
channel plumbing, a mean-|x| reduction, and (registered by
:mod:`flowcast.warping`) bilinear backward warping. The compute graph has
the same shape every optimization iteration, so there is no graph
compiler: a tape is an append-only list of nodes in topological order,
and the backward pass is a single reverse sweep.

Conventions:
  - Node values are float64 (H, W, C) arrays owned by the tape. ``leaf``
    copies its input, ops allocate fresh outputs, and nothing mutates a
    recorded value, so replaying identical inputs is bit-reproducible.
  - Scalars on the tape are (1, 1, 1) grids; ``mean_abs`` produces one and
    ``Tape.backward`` requires one as the root.
  - A backprop closure receives the output gradient and accumulates into
    its parents via ``Tape._acc``. Closures must never mutate the gradient
    array they are handed (accumulation rebinds, it does not update in
    place), which keeps contributions independent of sweep order.
"""

from functools import lru_cache

import numpy as np

from .errors import ShapeMismatchError
from .grid import as_grid


class Node:
    """Handle to one recorded grid value on a tape."""

    __slots__ = ("tape", "idx", "value")

    def __init__(self, tape, idx, value):
        self.tape = tape
        self.idx = idx
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def channels(self):
        return self.value.shape[2]

    def detach(self):
        """Copy of the forward value, disconnected from the tape."""
        return self.value.copy()

    def item(self):
        if self.value.size != 1:
            raise ValueError(f"item() needs a scalar node, got shape {self.value.shape}")
        return float(self.value.ravel()[0])

    # arithmetic sugar; scalars are python numbers, grids are Nodes
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return rsub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return rdiv(other, self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Node(idx={self.idx}, shape={self.value.shape})"


class Tape:
    """Append-only record of grid operations plus per-node gradients."""

    def __init__(self):
        self.nodes = []
        self._backprops = []
        self._grads = None

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value):
        """Record an input grid (copied; the tape owns its values)."""
        return self._record(as_grid(value).copy(), None)

    def constant(self, value):
        """Alias of ``leaf`` for values we never intend to differentiate."""
        return self.leaf(value)

    def _record(self, value, backprop):
        node = Node(self, len(self.nodes), value)
        self.nodes.append(node)
        self._backprops.append(backprop)
        return node

    def backward(self, root):
        """Reverse sweep from a scalar root; fills per-node gradients.

        Every node at or below the root index gets a gradient; nodes the
        root does not depend on read back as zero via ``grad``.
        """
        if root.tape is not self:
            raise ValueError("root node belongs to a different tape")
        if root.value.size != 1:
            raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")
        grads = [None] * len(self.nodes)
        grads[root.idx] = np.ones_like(root.value)
        self._grads = grads
        for i in range(root.idx, -1, -1):
            g = grads[i]
            if g is None:
                continue
            bp = self._backprops[i]
            if bp is not None:
                bp(g)

    def grad(self, node):
        """Gradient of the last backward root w.r.t. ``node`` (zeros if unreachable)."""
        if node.tape is not self:
            raise ValueError("node belongs to a different tape")
        g = None if self._grads is None else self._grads[node.idx]
        if g is None:
            return np.zeros_like(node.value)
        return g

    def _acc(self, node, g):
        grads = self._grads
        cur = grads[node.idx]
        if cur is None:
            grads[node.idx] = g
        else:
            grads[node.idx] = cur + g


def _same_tape(a, b):
    if a.tape is not b.tape:
        raise ValueError("operands recorded on different tapes")
    return a.tape


def _check_shapes(a, b, op):
    if a.value.shape != b.value.shape:
        raise ShapeMismatchError(f"{op}: shape {a.value.shape} vs {b.value.shape}")


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    if isinstance(b, Node):
        t = _same_tape(a, b)
        _check_shapes(a, b, "add")

        def bp(g):
            t._acc(a, g)
            t._acc(b, g)

        return t._record(a.value + b.value, bp)
    t = a.tape
    return t._record(a.value + float(b), lambda g: t._acc(a, g))


def sub(a, b):
    if isinstance(b, Node):
        t = _same_tape(a, b)
        _check_shapes(a, b, "sub")

        def bp(g):
            t._acc(a, g)
            t._acc(b, -g)

        return t._record(a.value - b.value, bp)
    t = a.tape
    return t._record(a.value - float(b), lambda g: t._acc(a, g))


def rsub(scalar, a):
    t = a.tape
    return t._record(float(scalar) - a.value, lambda g: t._acc(a, -g))


def mul(a, b):
    if isinstance(b, Node):
        t = _same_tape(a, b)
        _check_shapes(a, b, "mul")

        def bp(g):
            t._acc(a, g * b.value)
            t._acc(b, g * a.value)

        return t._record(a.value * b.value, bp)
    t = a.tape
    s = float(b)
    return t._record(a.value * s, lambda g: t._acc(a, g * s))


def div(a, b):
    if isinstance(b, Node):
        t = _same_tape(a, b)
        _check_shapes(a, b, "div")
        out = a.value / b.value

        def bp(g):
            t._acc(a, g / b.value)
            t._acc(b, -g * out / b.value)

        return t._record(out, bp)
    return mul(a, 1.0 / float(b))


def rdiv(scalar, b):
    t = b.tape
    out = float(scalar) / b.value

    def bp(g):
        t._acc(b, -g * out / b.value)

    return t._record(out, bp)


def neg(a):
    t = a.tape
    return t._record(-a.value, lambda g: t._acc(a, -g))


def absval(a):
    t = a.tape
    # subgradient 0 at the kink
    return t._record(np.abs(a.value), lambda g: t._acc(a, g * np.sign(a.value)))


def square(a):
    t = a.tape
    return t._record(a.value * a.value, lambda g: t._acc(a, 2.0 * a.value * g))


def sigmoid(a):
    t = a.tape
    out = 1.0 / (1.0 + np.exp(-a.value))

    def bp(g):
        t._acc(a, g * out * (1.0 - out))

    return t._record(out, bp)


def elementwise(kind, a, b=None):
    """Dispatch by op name: add / sub / mul / div / abs / square."""
    unary = {"abs": absval, "square": square, "neg": neg, "sigmoid": sigmoid}
    binary = {"add": add, "sub": sub, "mul": mul, "div": div}
    if kind in unary:
        if b is not None:
            raise ValueError(f"{kind} is unary")
        return unary[kind](a)
    if kind in binary:
        return binary[kind](a, b)
    raise ValueError(f"unknown elementwise op {kind!r}")


# ---------------------------------------------------------------------------
# reduction


def mean_abs(a):
    """Scalar node: mean of |a| (the L1 norm normalized by element count)."""
    t = a.tape
    n = a.value.size
    if n == 0:
        raise ShapeMismatchError("mean_abs of an empty grid")
    out = np.full((1, 1, 1), np.mean(np.abs(a.value)))

    def bp(g):
        t._acc(a, (g.ravel()[0] / n) * np.sign(a.value))

    return t._record(out, bp)


# ---------------------------------------------------------------------------
# fixed-kernel convolution (edge-replicated padding)


def conv2d(a, kernel):
    """Correlate each channel with a small fixed 2-D kernel.

    Borders are edge-replicated; the backward pass is the exact adjoint
    (scatter into the padded frame, then fold the pad back onto the edges).
    """
    t = a.tape
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be 2-D with odd sides, got {k.shape}")
    ph, pw = k.shape[0] // 2, k.shape[1] // 2
    H, W, C = a.value.shape
    taps = [
        (dy, dx, k[dy + ph, dx + pw])
        for dy in range(-ph, ph + 1)
        for dx in range(-pw, pw + 1)
        if k[dy + ph, dx + pw] != 0.0
    ]
    pad = np.pad(a.value, ((ph, ph), (pw, pw), (0, 0)), mode="edge")
    out = np.zeros_like(a.value)
    for dy, dx, w in taps:
        out += w * pad[ph + dy : ph + dy + H, pw + dx : pw + dx + W]

    def bp(g):
        gpad = np.zeros((H + 2 * ph, W + 2 * pw, C))
        for dy, dx, w in taps:
            gpad[ph + dy : ph + dy + H, pw + dx : pw + dx + W] += w * g
        if pw:
            gpad[:, pw] += gpad[:, :pw].sum(axis=1)
            gpad[:, W + pw - 1] += gpad[:, W + pw :].sum(axis=1)
        core = gpad[:, pw : W + pw]
        if ph:
            core[ph] += core[:ph].sum(axis=0)
            core[H + ph - 1] += core[H + ph :].sum(axis=0)
        t._acc(a, core[ph : H + ph])

    return t._record(out, bp)


# ---------------------------------------------------------------------------
# bilinear resize (align-corners), realized as two cached 1-D linear maps


@lru_cache(maxsize=None)
def _resize_matrix(n_in, n_out):
    """Dense (n_out, n_in) row-interpolation matrix, align-corners."""
    m = np.zeros((n_out, n_in))
    if n_in == 1 or n_out == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    i0 = np.clip(np.floor(pos).astype(int), 0, max(n_in - 2, 0))
    w = pos - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    m[np.arange(n_out), i0] += 1.0 - w
    m[np.arange(n_out), i1] += w
    return m


def _apply_rows(mat, x):
    h, w, c = x.shape
    return (mat @ x.reshape(h, w * c)).reshape(mat.shape[0], w, c)


def _apply_cols(mat, x):
    xt = x.transpose(1, 0, 2)
    return _apply_rows(mat, xt).transpose(1, 0, 2)


def resize_bilinear(a, out_h, out_w):
    """Bilinear resize to (out_h, out_w); differentiable, align-corners."""
    t = a.tape
    H, W, _ = a.value.shape
    ry = _resize_matrix(H, out_h)
    rx = _resize_matrix(W, out_w)
    out = _apply_cols(rx, _apply_rows(ry, a.value))

    def bp(g):
        t._acc(a, _apply_rows(ry.T, _apply_cols(rx.T, g)))

    return t._record(out, bp)


# ---------------------------------------------------------------------------
# channel plumbing


def channel_dot(a, weights):
    """Weighted sum over channels -> 1-channel grid."""
    t = a.tape
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (a.value.shape[2],):
        raise ShapeMismatchError(f"channel_dot: {w.shape} weights for {a.value.shape[2]} channels")
    out = (a.value @ w)[:, :, None]

    def bp(g):
        t._acc(a, g * w)

    return t._record(out, bp)


def repeat_channels(a, n):
    """Tile a 1-channel grid to n channels."""
    t = a.tape
    if a.value.shape[2] != 1:
        raise ShapeMismatchError(f"repeat_channels needs 1 channel, got {a.value.shape[2]}")
    if n == 1:
        return a
    out = np.repeat(a.value, n, axis=2)

    def bp(g):
        t._acc(a, g.sum(axis=2, keepdims=True))

    return t._record(out, bp)


def channel_slice(a, c0, c1):
    t = a.tape
    C = a.value.shape[2]
    if not (0 <= c0 < c1 <= C):
        raise ShapeMismatchError(f"channel_slice [{c0}:{c1}] out of range for {C} channels")
    out = a.value[:, :, c0:c1].copy()

    def bp(g):
        gz = np.zeros_like(a.value)
        gz[:, :, c0:c1] = g
        t._acc(a, gz)

    return t._record(out, bp)


def concat_channels(parts):
    parts = list(parts)
    t = parts[0].tape
    for p in parts[1:]:
        _same_tape(parts[0], p)
        if p.value.shape[:2] != parts[0].value.shape[:2]:
            raise ShapeMismatchError(
                f"concat_channels: spatial {p.value.shape[:2]} vs {parts[0].value.shape[:2]}"
            )
    sizes = [p.value.shape[2] for p in parts]
    offsets = np.cumsum([0] + sizes)
    out = np.concatenate([p.value for p in parts], axis=2)

    def bp(g):
        for p, o0, o1 in zip(parts, offsets[:-1], offsets[1:]):
            t._acc(p, g[:, :, o0:o1])

    return t._record(out, bp)
