"""Reverse-mode differentiation over float64 numpy arrays.

Every operator returns a new :class:`Tensor` holding its value plus a closure
that maps the output gradient to input gradients. :func:`backward` walks the
graph in reverse topological order. The operator set is deliberately small:
only what the codec's networks and rate model need.
"""

import numpy as np
from scipy import special

from ..errors import NonFiniteError, ShapeError

__all__ = [
    "Tensor", "as_tensor", "backward",
    "add", "sub", "mul", "div", "neg", "abs_", "square",
    "matmul", "channel_mix", "conv3x3",
    "relu", "exp", "softplus", "sigmoid", "tanh", "log2", "normal_cdf",
    "clamp_min", "sum_", "mean", "concat", "reshape", "take",
    "segment_mean", "gather_columns",
]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(op, data, parents, backward_fn):
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op, "non-finite value in output")
    out = Tensor(data, op=op)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, f"cannot broadcast {a.shape} with {b.shape}") from None


def backward(root, grad=None):
    """Accumulate d(root)/d(leaf) into ``.grad`` of every leaf requiring it."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(root): np.ones_like(root.data) if grad is None else np.asarray(grad, dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _result("add", a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _result("sub", a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _result("mul", a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def bw(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)
    return _result("div", out, (a, b), bw)


def neg(a):
    a = as_tensor(a)
    return _result("neg", -a.data, (a,), lambda g: (-g,))


def abs_(a):
    a = as_tensor(a)
    return _result("abs", np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def square(a):
    a = as_tensor(a)
    return _result("square", a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _result("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result("exp", out, (a,), lambda g: (g * out,))


def softplus(a):
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _result("softplus", out, (a,), lambda g: (g * special.expit(x),))


def sigmoid(a):
    a = as_tensor(a)
    out = special.expit(a.data)
    return _result("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def log2(a, floor=None):
    """Base-2 logarithm; values below ``floor`` are clamped and pass no gradient."""
    a = as_tensor(a)
    x = a.data
    if floor is not None:
        live = x >= floor
        x = np.where(live, x, floor)
    elif np.any(x <= 0):
        raise NonFiniteError("log2", "non-positive input")
    else:
        live = True
    out = np.log2(x)

    def bw(g):
        return (g * live / (x * np.log(2.0)),)
    return _result("log2", out, (a,), bw)


def normal_cdf(a):
    a = as_tensor(a)
    out = special.ndtr(a.data)
    pdf = np.exp(-0.5 * a.data * a.data) / np.sqrt(2.0 * np.pi)
    return _result("normal_cdf", out, (a,), lambda g: (g * pdf,))


def clamp_min(a, lower):
    a = as_tensor(a)
    live = a.data >= lower
    return _result("clamp_min", np.where(live, a.data, lower), (a,), lambda g: (g * live,))


# -- reductions and shape ---------------------------------------------------

def sum_(a, axis=None):
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)
    return _result("sum", out, (a,), bw)


def mean(a, axis=None):
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis), 1.0 / count)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", f"cannot reshape {a.shape} to {shape}") from None
    return _result("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def concat(parts, axis=0):
    parts = [as_tensor(p) for p in parts]
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError("concat", str(exc)) from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))
    return _result("concat", out, tuple(parts), bw)


def take(a, indices, axis):
    """Select entries along ``axis``; gradient scatters back (zero elsewhere)."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    out = np.take(a.data, indices, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)
    return _result("take", out, (a,), bw)


# -- linear layers ----------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", f"incompatible shapes {a.shape} @ {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g
    return _result("matmul", a.data @ b.data, (a, b), bw)


def channel_mix(x, weight, bias=None):
    """1x1 convolution: mixes the leading (channel) axis of ``x``.

    ``x`` is (C_in, ...), ``weight`` is (C_out, C_in), ``bias`` is (C_out,).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.data.ndim != 2 or x.data.ndim < 1 or weight.shape[1] != x.shape[0]:
        raise ShapeError("channel_mix", f"weight {weight.shape} does not match input {x.shape}")
    rest = x.shape[1:]
    flat = x.data.reshape(x.shape[0], -1)
    out = weight.data @ flat
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError("channel_mix", f"bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data[:, None]
        parents = parents + (bias,)

    def bw(g):
        g2 = g.reshape(weight.shape[0], -1)
        grads = [(weight.data.T @ g2).reshape(x.shape), g2 @ flat.T]
        if bias is not None:
            grads.append(g2.sum(axis=1))
        return tuple(grads)
    return _result("channel_mix", out.reshape((weight.shape[0],) + rest), parents, bw)


def _fold_reflect(gp, h, w):
    rows = gp[:, 1:-1, :].copy()
    rows[:, 1, :] += gp[:, 0, :]
    rows[:, h - 2, :] += gp[:, h + 1, :]
    out = rows[:, :, 1:-1].copy()
    out[:, :, 1] += rows[:, :, 0]
    out[:, :, w - 2] += rows[:, :, w + 1]
    return out


def conv3x3(x, weight, bias=None):
    """3x3 convolution, stride 1, reflect padding. ``x`` is (C_in, H, W)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 3 or weight.data.ndim != 4 or weight.shape[1:] != (x.shape[0], 3, 3):
        raise ShapeError("conv3x3", f"weight {weight.shape} does not match input {x.shape}")
    cin, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError("conv3x3", f"spatial size {h}x{w} too small for reflect padding")
    cout = weight.shape[0]
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    cols = np.stack([xp[:, dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3)], axis=1)
    cols = cols.reshape(cin * 9, h * w)
    wmat = weight.data.reshape(cout, cin * 9)
    out = wmat @ cols
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError("conv3x3", f"bias {bias.shape} does not match {cout} outputs")
        out += bias.data[:, None]
        parents = parents + (bias,)

    def bw(g):
        g2 = g.reshape(cout, h * w)
        gcols = (wmat.T @ g2).reshape(cin, 9, h, w)
        gp = np.zeros((cin, h + 2, w + 2))
        for k in range(9):
            dy, dx = divmod(k, 3)
            gp[:, dy:dy + h, dx:dx + w] += gcols[:, k]
        grads = [_fold_reflect(gp, h, w), (g2 @ cols.T).reshape(weight.shape)]
        if bias is not None:
            grads.append(g2.sum(axis=1))
        return tuple(grads)
    return _result("conv3x3", out.reshape(cout, h, w), parents, bw)


# -- semantic pooling -------------------------------------------------------

def segment_mean(x, labels, num_classes):
    """Average the channels of ``x`` (C, ...) over pixels sharing a label.

    Returns a (C, num_classes) tensor; classes with no pixels get zeros.
    """
    x = as_tensor(x)
    labels = np.asarray(labels).reshape(-1)
    flat = x.data.reshape(x.shape[0], -1)
    if flat.shape[1] != labels.size:
        raise ShapeError("segment_mean", f"{flat.shape[1]} pixels vs {labels.size} labels")
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    if counts.size > num_classes:
        raise ShapeError("segment_mean", f"label {labels.max()} >= {num_classes} classes")
    sums = np.zeros((flat.shape[0], num_classes))
    for c in range(flat.shape[0]):
        sums[c] = np.bincount(labels, weights=flat[c], minlength=num_classes)
    safe = np.where(counts > 0, counts, 1.0)
    out = np.where(counts > 0, sums / safe, 0.0)

    def bw(g):
        return (np.where(counts > 0, g / safe, 0.0)[:, labels].reshape(x.shape),)
    return _result("segment_mean", out, (x,), bw)


def gather_columns(t, labels):
    """Inverse of pooling: pixel p receives column ``labels[p]`` of ``t`` (C, N)."""
    t = as_tensor(t)
    labels = np.asarray(labels)
    if t.data.ndim != 2:
        raise ShapeError("gather_columns", f"expected (C, N) prior, got {t.shape}")
    if labels.size and labels.max() >= t.shape[1]:
        raise ShapeError("gather_columns", f"label {labels.max()} >= {t.shape[1]} columns")
    flat = labels.reshape(-1)
    out = t.data[:, flat].reshape((t.shape[0],) + labels.shape)
    n = t.shape[1]

    def bw(g):
        g2 = g.reshape(t.shape[0], -1)
        full = np.zeros_like(t.data)
        for c in range(t.shape[0]):
            full[c] = np.bincount(flat, weights=g2[c], minlength=n)
        return (full,)
    return _result("gather_columns", out, (t,), bw)
