"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records a node in an implicit computation graph; calling
``backward`` on a scalar result accumulates gradients into every reachable
tensor created with ``requires_grad=True``. Node ids increase monotonically
with creation order, which is a valid topological order, so the backward
sweep is deterministic for a fixed forward pass.
"""

import numpy as np

_node_counter = 0

# Hard error on NaN/Inf at op boundaries. Tests may disable it temporarily
# to probe saturation behaviour, production code never should.
check_finite = True


class GradError(ValueError):
    """Raised for invalid graph operations (non-scalar root, shape clash)."""


def _next_id():
    global _node_counter
    _node_counter += 1
    return _node_counter


def _as_data(x):
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_id")

    # make numpy defer mixed ndarray-Tensor arithmetic to our reflected ops
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if check_finite and not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite value entering the graph")
        self.data = arr
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.grad = None
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self._id = _next_id()

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        """Same values, no history: gradients never flow past this point."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise GradError(f"backward root must be scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise GradError("backward on a tensor detached from the graph")
        nodes = []
        seen = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if node._id in seen:
                continue
            seen.add(node._id)
            nodes.append(node)
            stack.extend(p for p in node._parents if p.requires_grad)
        nodes.sort(key=lambda n: n._id)
        self.grad = np.ones_like(self.data)
        for node in reversed(nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g):
        g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g  # grad buffer is owned (copied on first write)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(constant(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(constant(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(x):
    """Wrap raw data as a non-differentiable tensor."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def parameter(x):
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True)


def _make(data, parents, backward):
    return Tensor(data, _parents=parents, _backward=backward)


# -- elementwise arithmetic ---------------------------------------------


def add(a, b):
    a, b = constant(a), constant(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(out_data, (a, b), backward)


def sub(a, b):
    a, b = constant(a), constant(b)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a, b = constant(a), constant(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(out_data, (a, b), backward)


def div(a, b):
    a, b = constant(a), constant(b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / b.data)
        if b.requires_grad:
            b._accumulate(-g * a.data / (b.data * b.data))

    return _make(out_data, (a, b), backward)


def neg(a):
    a = constant(a)

    def backward(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def mask_mul(a, mask):
    """Multiply by a fixed 0/1 (or soft) mask; the mask carries no gradient."""
    a = constant(a)
    m = _as_data(mask)

    def backward(g):
        a._accumulate(g * m)

    return _make(a.data * m, (a,), backward)


# -- matmul ---------------------------------------------------------------


def matmul(a, b):
    a, b = constant(a), constant(b)
    if a.data.shape[-1] != b.data.shape[0]:
        raise GradError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            gb = a.data.reshape(-1, a.data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            b._accumulate(gb)

    return _make(out_data, (a, b), backward)


# -- nonlinearities --------------------------------------------------------


def exp(a):
    a = constant(a)
    out_data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out_data)

    return _make(out_data, (a,), backward)


def log(a):
    a = constant(a)

    def backward(g):
        a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def sqrt(a):
    a = constant(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / out_data)

    return _make(out_data, (a,), backward)


def square(a):
    a = constant(a)

    def backward(g):
        a._accumulate(g * 2.0 * a.data)

    return _make(a.data * a.data, (a,), backward)


def tanh(a):
    a = constant(a)
    out_data = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward)


def sigmoid(a):
    a = constant(a)
    out_data = _sigmoid_np(a.data)

    def backward(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def _sigmoid_np(x):
    # one vectorized ufunc, stable for any magnitude
    return 0.5 * np.tanh(0.5 * x) + 0.5


def silu(a):
    a = constant(a)
    s = _sigmoid_np(a.data)
    out_data = a.data * s

    def backward(g):
        a._accumulate(g * _silu_backward_factor(a.data, s))

    return _make(out_data, (a,), backward)


def softplus(a):
    a = constant(a)
    e = np.exp(-np.abs(a.data))
    out_data = np.maximum(a.data, 0.0) + np.log1p(e)

    def backward(g):
        a._accumulate(g * _sigmoid_np(a.data))

    return _make(out_data, (a,), backward)


def _silu_backward_factor(x, s):
    # d/dx x*sigma(x) = sigma + x*sigma*(1-sigma), fused to limit temporaries
    f = 1.0 - s
    f *= x
    f += 1.0
    f *= s
    return f


def softclamp(a, lo, hi):
    """Smooth saturation onto (lo, hi); identity with slope 1 at the midpoint."""
    a = constant(a)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    t = np.tanh((a.data - mid) / half)
    out_data = mid + half * t

    def backward(g):
        a._accumulate(g * (1.0 - t * t))

    return _make(out_data, (a,), backward)


# -- shape ops ---------------------------------------------------------------


def concat(tensors, axis=-1):
    tensors = [constant(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, s, e in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis if axis >= 0 else g.ndim + axis] = slice(s, e)
                t._accumulate(g[tuple(idx)])

    return _make(out_data, tuple(tensors), backward)


def slice_last(a, start, stop):
    a = constant(a)
    out_data = a.data[..., start:stop]

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        a._accumulate(full)

    return _make(out_data, (a,), backward)


def reshape(a, shape):
    a = constant(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(out_data, (a,), backward)


def tile_rows(a, k):
    """Stack k copies of a (batch, d) tensor along the batch dim."""
    a = constant(a)
    if a.data.ndim != 2:
        raise GradError("tile_rows expects a matrix")
    b = a.data.shape[0]

    def backward(g):
        a._accumulate(g.reshape(k, b, -1).sum(axis=0))

    return _make(np.tile(a.data, (k, 1)), (a,), backward)


def flip_last(a):
    a = constant(a)

    def backward(g):
        a._accumulate(g[..., ::-1])

    return _make(a.data[..., ::-1].copy(), (a,), backward)


def transpose2d(a):
    a = constant(a)
    if a.data.ndim != 2:
        raise GradError("transpose2d expects a matrix")

    def backward(g):
        a._accumulate(g.T)

    return _make(a.data.T.copy(), (a,), backward)


def diag_embed(a):
    a = constant(a)
    if a.data.ndim != 1:
        raise GradError("diag_embed expects a vector")

    def backward(g):
        a._accumulate(np.diagonal(g).copy())

    return _make(np.diag(a.data), (a,), backward)


# -- reductions ---------------------------------------------------------------


def tsum(a):
    a = constant(a)

    def backward(g):
        a._accumulate(np.broadcast_to(g, a.data.shape))

    return _make(a.data.sum(), (a,), backward)


def sum_last(a):
    a = constant(a)

    def backward(g):
        a._accumulate(np.broadcast_to(g[..., None], a.data.shape))

    return _make(a.data.sum(axis=-1), (a,), backward)


def mean(a):
    a = constant(a)
    n = a.data.size

    def backward(g):
        a._accumulate(np.broadcast_to(g / n, a.data.shape))

    return _make(a.data.mean(), (a,), backward)


def mean_last(a):
    a = constant(a)
    n = a.data.shape[-1]

    def backward(g):
        a._accumulate(np.broadcast_to(g[..., None] / n, a.data.shape))

    return _make(a.data.mean(axis=-1), (a,), backward)


def softmax_last(a):
    a = constant(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        a._accumulate(out_data * (g - dot))

    return _make(out_data, (a,), backward)


def log_softmax_last(a):
    a = constant(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse
    soft = np.exp(out_data)

    def backward(g):
        a._accumulate(g - soft * g.sum(axis=-1, keepdims=True))

    return _make(out_data, (a,), backward)
