"""Dense tensors with reverse-mode automatic differentiation.

The engine is define-by-run: every operation on tensors that require
gradients appends a node to an implicit tape, and ``backward()`` on a
scalar result walks the tape once in reverse topological order. Data is
stored in numpy arrays; float32 is the usual width for experiment runs
and float64 is used wherever finite-difference checks are involved.
"""

from __future__ import annotations

import ctypes
import ctypes.util
from contextlib import contextmanager

import numpy as np


def _tune_allocator():
    # Large ndarray temporaries churn every iteration; glibc serves >128KB
    # blocks via mmap/munmap, so each reuse page-faults from scratch. Raising
    # the thresholds keeps those blocks on the heap for reuse (10x on the
    # widest matmuls here). M_TRIM_THRESHOLD = -1, M_MMAP_THRESHOLD = -3.
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c"))
        libc.mallopt(-1, 1 << 30)
        libc.mallopt(-3, 1 << 30)
    except (OSError, AttributeError, TypeError):
        pass


_tune_allocator()


class ShapeError(ValueError):
    """Operand shapes do not conform for an operation."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes " + " and ".join(str(tuple(s)) for s in shapes))


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (forward values only)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """N-dimensional array that can participate in a gradient tape.

    ``grad`` is populated by a backward pass and accumulates across
    passes; call sites that reuse leaves (optimizers, training loops)
    reset it explicitly between steps.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward_fn=None, _op: str = ""):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward_fn = _backward_fn
        self._op = _op

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f", op={self._op!r}" if self._op else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}, requires_grad={self.requires_grad}{tag})"

    def detach(self) -> "Tensor":
        """Same values, cut from the tape."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- backward pass -------------------------------------------------------

    def backward(self):
        """Populate ``grad`` on every tensor reachable from this scalar.

        Each node of the graph is visited exactly once. Leaves that are
        in the graph but receive no gradient flow end up with zeros.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {tuple(self.shape)}")
        if not self.requires_grad:
            raise ValueError("backward on a tensor that is not connected to any gradient-tracked leaf")

        order = _topo_order(self)
        for node in order:
            if node.requires_grad and node.grad is None:
                node.grad = np.zeros_like(node.data)
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return _getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _topo_order(root: Tensor):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _tracking(*tensors) -> bool:
    return _GRAD_ENABLED and any(t.requires_grad for t in tensors)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accum(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        t.grad += g


# -- elementwise and reduction ops --------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError("add", a.shape, b.shape) from None
    if not _tracking(a, b):
        return Tensor(out)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return Tensor(out, True, (a, b), bw, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError("sub", a.shape, b.shape) from None
    if not _tracking(a, b):
        return Tensor(out)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return Tensor(out, True, (a, b), bw, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError("mul", a.shape, b.shape) from None
    if not _tracking(a, b):
        return Tensor(out)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return Tensor(out, True, (a, b), bw, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data / b.data
    except ValueError:
        raise ShapeError("div", a.shape, b.shape) from None
    if not _tracking(a, b):
        return Tensor(out)

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return Tensor(out, True, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    if not _tracking(a):
        return Tensor(-a.data)

    def bw(g):
        _accum(a, -g)

    return Tensor(-a.data, True, (a,), bw, "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    out = a.data**exponent
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        _accum(a, g * exponent * a.data ** (exponent - 1.0))

    return Tensor(out, True, (a,), bw, "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        _accum(a, g * out)

    return Tensor(out, True, (a,), bw, "exp")


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        _accum(a, g / a.data)

    return Tensor(out, True, (a,), bw, "log")


def sigmoid(a: Tensor) -> Tensor:
    # exp(-|x|)-based form stays in (0, 1] and never overflows
    x = a.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0, z) / (1.0 + z)
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        _accum(a, g * out * (1.0 - out))

    return Tensor(out, True, (a,), bw, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        _accum(a, g * (1.0 - out * out))

    return Tensor(out, True, (a,), bw, "tanh")


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)
    if not _tracking(a):
        return Tensor(out)
    mask = a.data > 0

    def bw(g):
        _accum(a, g * mask)

    return Tensor(out, True, (a,), bw, "relu")


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp values; gradient passes only through the unclamped interior."""
    out = np.clip(a.data, low, high)
    if not _tracking(a):
        return Tensor(out)
    mask = (a.data > low) & (a.data < high)

    def bw(g):
        _accum(a, g * mask)

    return Tensor(out, True, (a,), bw, "clip")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    peak = a.data.max(axis=axis, keepdims=True)
    if float(peak.max(initial=-np.inf)) > 60.0:  # shift only when exp could overflow
        out = np.exp(a.data - peak)
    else:
        out = np.exp(a.data)
    out /= out.sum(axis=axis, keepdims=True)
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accum(a, out * (g - inner))

    return Tensor(out, True, (a,), bw, "softmax")


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        _accum(a, _spread(g, a.shape, axis, keepdims))

    return Tensor(out, True, (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if not _tracking(a):
        return Tensor(out)
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in _norm_axes(axis, a.ndim)])

    def bw(g):
        _accum(a, _spread(g, a.shape, axis, keepdims) / count)

    return Tensor(out, True, (a,), bw, "mean")


def _norm_axes(axis, ndim):
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def _spread(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    """Broadcast a reduced gradient back over the reduced axes."""
    if axis is not None and not keepdims:
        g = np.expand_dims(g, _norm_axes(axis, len(shape)))
    return np.broadcast_to(g, shape)


# -- shape manipulation --------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        _accum(a, g.reshape(a.shape))

    return Tensor(out, True, (a,), bw, "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    out = a.data.transpose(axes)
    if not _tracking(a):
        return Tensor(out)
    inverse = None if axes is None else np.argsort(axes)

    def bw(g):
        _accum(a, g.transpose(inverse))

    return Tensor(out, True, (a,), bw, "transpose")


def broadcast_to(a: Tensor, shape) -> Tensor:
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, shape) from None
    if not _tracking(a):
        return Tensor(out.copy())

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))

    return Tensor(out.copy(), True, (a,), bw, "broadcast_to")


def _getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[index] = g
            a.grad += buf

    return Tensor(out, True, (a,), bw, "getitem")


def take(a: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather rows by integer index; duplicates accumulate in the gradient."""
    indices = np.asarray(indices)
    out = np.take(a.data, indices, axis=axis)
    if not _tracking(a):
        return Tensor(out)

    def bw(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.add.at(buf, (slice(None),) * axis + (indices,), g)
            a.grad += buf

    return Tensor(out, True, (a,), bw, "take")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    if not _tracking(*tensors):
        return Tensor(out)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = (slice(None),) * (axis % g.ndim) + (slice(lo, hi),)
            _accum(t, g[sl])

    return Tensor(out, True, tuple(tensors), bw, "concat")


# -- linear algebra -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor, scale: float | None = None) -> Tensor:
    """a @ b, optionally times a constant (applied in place on the product)."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None
    if scale is not None:
        out *= scale
    if not _tracking(a, b):
        return Tensor(out)

    def bw(g):
        if scale is not None:
            g = g * scale
        if a.requires_grad:
            a.grad += _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)

    return Tensor(out, True, (a, b), bw, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w plus optional bias, fused (bias added in place on the product)."""
    if x.ndim < 2 or w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError("linear", x.shape, w.shape)
    out = x.data @ w.data
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeError("linear bias", b.shape, (w.shape[1],))
        if b.data.any():  # all-zero bias: adding it is the identity
            out += b.data
    parents = (x, w) if b is None else (x, w, b)
    if not _tracking(*parents):
        return Tensor(out)

    def bw(g):
        if x.requires_grad:
            x.grad += g @ w.data.T
        g2 = g.reshape(-1, w.shape[1])
        if w.requires_grad:
            w.grad += x.data.reshape(-1, w.shape[0]).T @ g2
        if b is not None and b.requires_grad:
            b.grad += g2.sum(axis=0)

    return Tensor(out, True, parents, bw, "linear")


def conv1d_causal(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """1-D causal convolution over the time axis.

    ``x`` is (batch, time, in_channels), ``w`` is (kernel, in_channels,
    out_channels), optional bias is (out_channels,). The input is
    zero-padded on the left by kernel-1 so the output keeps the input's
    temporal length and position t only sees inputs at times <= t.
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1]:
        raise ShapeError("conv1d_causal", x.shape, w.shape)
    k, c_in, c_out = w.shape
    n, t = x.shape[0], x.shape[1]
    pad = k - 1
    xp = np.pad(x.data, ((0, 0), (pad, 0), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)  # (n, t, c_in, k)
    cols = windows.transpose(0, 1, 3, 2).reshape(n * t, k * c_in)
    w_mat = w.data.reshape(k * c_in, c_out)
    out = cols @ w_mat
    if b is not None:
        if b.shape != (c_out,):
            raise ShapeError("conv1d_causal bias", b.shape, (c_out,))
        if b.data.any():
            out += b.data
    out = out.reshape(n, t, c_out)
    parents = (x, w) if b is None else (x, w, b)
    if not _tracking(*parents):
        return Tensor(out)

    def bw(g):
        g_mat = g.reshape(n * t, c_out)
        if w.requires_grad:
            w.grad += (cols.T @ g_mat).reshape(k, c_in, c_out)
        if b is not None and b.requires_grad:
            b.grad += g_mat.sum(axis=0)
        if x.requires_grad:
            g_cols = (g_mat @ w_mat.T).reshape(n, t, k, c_in)
            g_xp = np.zeros_like(xp)
            for j in range(k):
                g_xp[:, j : j + t, :] += g_cols[:, :, j, :]
            x.grad += g_xp[:, pad:, :]

    return Tensor(out, True, parents, bw, "conv1d_causal")


# -- verification ----------------------------------------------------------------


def grad_check(f, x, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a tensor to a scalar tensor. Requires float64 input; the
    error at each element is |analytic - numeric| / max(|analytic|,
    |numeric|, 1e-8). Non-finite values raise with the offending index.
    """
    data = np.array(x.data if isinstance(x, Tensor) else x, dtype=None, copy=True)
    if data.dtype != np.float64:
        raise ValueError(f"grad_check requires float64 input, got {data.dtype}")

    leaf = Tensor(data.copy(), requires_grad=True)
    out = f(leaf)
    out.backward()
    analytic = leaf.grad.copy()

    numeric = np.zeros_like(data)
    flat = data.reshape(-1)
    num_flat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(f(Tensor(data)).data)
            flat[i] = orig - step
            lo = float(f(Tensor(data)).data)
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2.0 * step)

    for name, arr in (("analytic", analytic), ("numeric", numeric)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise FloatingPointError(f"non-finite {name} gradient at flat index {int(bad[0])}")

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def as_scalar(value: float, dtype=np.float64) -> Tensor:
    return Tensor(np.asarray(value, dtype=dtype))
