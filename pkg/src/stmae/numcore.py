"""Dense n-d arrays with reverse-mode differentiation on top of numpy.

Every op builds a `Tensor` whose parents carry a closure computing the
local vector-Jacobian product. `backward()` walks the graph once in
reverse topological order and accumulates gradients into `.grad`.

Data is row-major float64 or float32; both dtypes run the same code
path. Reductions delegate to numpy, whose summation order over the
row-major layout is fixed within one build, so results are bitwise
reproducible for identical inputs.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

LN_EPS = 1e-6  # layer-normalization epsilon

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes do not conform to the op's rule."""


class no_grad:
    """Context manager: skip graph construction inside the block."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_float_array(data):
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """A dense array plus the graph edges needed for backpropagation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = _as_float_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; python scalars are wrapped at this tensor's dtype so
    # float32 graphs stay float32
    def __add__(self, other):
        return add(self, _wrap_like(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap_like(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _wrap_like(other, self.dtype))

    def __rsub__(self, other):
        return sub(_wrap_like(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap_like(other, self.dtype))

    def __rmul__(self, other):
        return mul(_wrap_like(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return slice_(self, key)

    def backward(self):
        backward(self)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _wrap_like(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def parameter(data):
    """A leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True)


def _make(data, parents):
    """Build an op result; parents is a list of (tensor, vjp closure)."""
    out = Tensor(data)
    if _grad_enabled:
        tracked = tuple((p, fn) for p, fn in parents if p.requires_grad)
        if tracked:
            out.requires_grad = True
            out._parents = tracked
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss):
    """Accumulate d(loss)/d(leaf) into .grad for every reachable tensor.

    `loss` must hold a single scalar.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node.grad is None:
            continue
        for parent, vjp in node._parents:
            contribution = vjp(node.grad)
            if parent.grad is None:
                parent.grad = contribution.copy()
            else:
                parent.grad += contribution


# ---------------------------------------------------------------------------
# Ops. Each documents its shape rule; mismatches raise ShapeError naming the
# op and both shapes.
# ---------------------------------------------------------------------------


def add(a, b):
    """Elementwise a + b with numpy broadcasting."""
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    return _make(data, [(a, lambda g: _unbroadcast(g, a.shape)),
                        (b, lambda g: _unbroadcast(g, b.shape))])


def sub(a, b):
    """Elementwise a - b with numpy broadcasting."""
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast")
    return _make(data, [(a, lambda g: _unbroadcast(g, a.shape)),
                        (b, lambda g: _unbroadcast(-g, b.shape))])


def mul(a, b):
    """Elementwise a * b with numpy broadcasting."""
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")
    return _make(data, [(a, lambda g: _unbroadcast(g * b.data, a.shape)),
                        (b, lambda g: _unbroadcast(g * a.data, b.shape))])


def neg(a):
    """Elementwise -a."""
    a = _wrap(a)
    return _make(-a.data, [(a, lambda g: -g)])


def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast.

    Both operands must have ndim >= 2 and a.shape[-1] == b.shape[-2].
    """
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands need ndim>=2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ for {a.shape} @ {b.shape}")
    data = a.data @ b.data
    return _make(data, [
        (a, lambda g: _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)),
        (b, lambda g: _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)),
    ])


def concat(tensors, axis=0):
    """Concatenate along `axis`; all other extents must match."""
    tensors = [_wrap(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}")
    parents = []
    start = 0
    for t in tensors:
        width = t.shape[axis]
        key = [slice(None)] * data.ndim
        key[axis] = slice(start, start + width)
        key = tuple(key)
        parents.append((t, lambda g, key=key: g[key]))
        start += width
    return _make(data, parents)


def slice_(a, key):
    """Basic indexing (ints and slices); gradient scatters back."""
    a = _wrap(a)
    data = a.data[key]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return full

    return _make(data, [(a, vjp)])


def gather(a, indices, axis=0):
    """Select rows `indices` (1-d int array) along `axis`. Repeats allowed."""
    a = _wrap(a)
    idx = np.asarray(indices)
    if idx.ndim != 1:
        raise ShapeError(f"gather: indices must be 1-d, got shape {idx.shape}")
    data = np.take(a.data, idx, axis=axis)

    def vjp(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return full

    return _make(data, [(a, vjp)])


def transpose(a, axes):
    """Permute axes."""
    a = _wrap(a)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inverse = np.argsort(axes)
    return _make(a.data.transpose(axes),
                 [(a, lambda g: g.transpose(inverse))])


def reshape(a, shape):
    """Reshape preserving total size."""
    a = _wrap(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    return _make(data, [(a, lambda g: g.reshape(a.shape))])


def layer_norm(a, eps=LN_EPS):
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    a = _wrap(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = centered * inv_std

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return inv_std * (g - gm - y * gym)

    return _make(y, [(a, vjp)])


def softmax(a):
    """Row-stochastic softmax over the last axis."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return s * (g - (g * s).sum(axis=-1, keepdims=True))

    return _make(s, [(a, vjp)])


def log_softmax(a):
    """log(softmax) over the last axis, computed stably."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    s = np.exp(y)

    def vjp(g):
        return g - s * g.sum(axis=-1, keepdims=True)

    return _make(y, [(a, vjp)])


def gelu(a):
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    a = _wrap(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    y = x * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return g * (cdf + x * pdf)

    return _make(y, [(a, vjp)])


def sigmoid(a):
    """Logistic function, numerically stable for both tails."""
    a = _wrap(a)
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return g * s * (1.0 - s)

    return _make(s, [(a, vjp)])


def softplus(a):
    """log(1 + exp(x)), stable; derivative is sigmoid(x)."""
    a = _wrap(a)
    x = a.data
    y = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def vjp(g):
        return g / (1.0 + np.exp(-x))

    return _make(y, [(a, vjp)])


def abs_(a):
    """Elementwise |x|; subgradient 0 at x == 0."""
    a = _wrap(a)
    return _make(np.abs(a.data), [(a, lambda g: g * np.sign(a.data))])


def huber(a, delta=1.0):
    """Elementwise Huber penalty of a residual: quadratic below delta."""
    a = _wrap(a)
    x = a.data
    ax = np.abs(x)
    y = np.where(ax <= delta, 0.5 * x * x, delta * (ax - 0.5 * delta))

    def vjp(g):
        return g * np.clip(x, -delta, delta)

    return _make(y, [(a, vjp)])


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(shape)), shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % len(shape) for ax in axes)
    if not keepdims:
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims=False):
    """Sum over `axis` (all axes when None)."""
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    return _make(np.asarray(data),
                 [(a, lambda g: _expand_reduced(g, a.shape, axis, keepdims).copy())])


def mean(a, axis=None, keepdims=False):
    """Arithmetic mean over `axis` (all axes when None)."""
    a = _wrap(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(np.asarray(data).size, 1)

    def vjp(g):
        return _expand_reduced(g, a.shape, axis, keepdims) / count

    return _make(np.asarray(data), [(a, vjp)])


# Registry of differentiable ops; the gradient suite checks every entry.
OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "neg": neg,
    "matmul": matmul,
    "concat": concat,
    "slice": slice_,
    "gather": gather,
    "transpose": transpose,
    "reshape": reshape,
    "layer_norm": layer_norm,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "abs": abs_,
    "huber": huber,
    "sum": sum_,
    "mean": mean,
}
