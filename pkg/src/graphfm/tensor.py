"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a row-major numpy array (float32 or float64) and records
the operations applied to it. Calling :meth:`Tensor.backward` on a scalar
result walks the recorded graph in reverse topological order and accumulates
gradients into the ``grad`` slot of every leaf tensor created with
``requires_grad=True``. Intermediate gradients are kept in a scratch map and
discarded, so repeated backward calls accumulate into the leaves — which is
exactly what gradient accumulation over several forward passes needs.

All operations are pure: they allocate fresh output arrays and never mutate
their inputs. Optimizers update parameters by writing to ``tensor.data``
directly, outside the graph.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np
from scipy import special

from .errors import DegenerateMaskError, ShapeError

DTYPES = (np.float32, np.float64)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(value, dtype=None):
    arr = np.asarray(value, dtype=dtype)
    if arr.dtype not in DTYPES:
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjps")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjps = ()

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # -- autograd ------------------------------------------------------------

    def _needs_graph(self):
        return self.requires_grad or bool(self._parents)

    def backward(self, seed=None):
        """Accumulate gradients of ``self`` into all reachable leaf tensors.

        ``seed`` defaults to 1.0 and must match the shape of ``self``.
        """
        if seed is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed requires a scalar output")
            seed = np.ones_like(self.data)
        seed = np.asarray(seed, dtype=self.data.dtype)
        if seed.shape != self.data.shape:
            raise ShapeError(f"seed shape {seed.shape} != output shape {self.data.shape}")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p._needs_graph():
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._parents:
                for parent, vjp in zip(node._parents, node._vjps):
                    if not parent._needs_graph():
                        continue
                    pg = vjp(g)
                    prev = grads.get(id(parent))
                    grads[id(parent)] = pg if prev is None else prev + pg
            elif node.requires_grad:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad += g

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    # -- method forms ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def swap_last(self):
        """Swap the last two axes (matrix transpose with batch dims)."""
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return transpose(self, tuple(axes))


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjps) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.grad = None
    if _grad_enabled and any(p._needs_graph() for p in parents):
        out._parents = parents
        out._vjps = vjps
    else:
        out._parents = ()
        out._vjps = ()
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise arithmetic ------------------------------------------------
# Plain python numbers take a constant fast path so that f32 tensors are not
# silently promoted to f64 and the graph stays small.


def add(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        return _make(a.data + b, (a,), (lambda g: g,))
    if isinstance(a, (int, float)):
        b = as_tensor(b)
        return _make(b.data + a, (b,), (lambda g: g,))
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data
    return _make(data, (a, b), (
        lambda g: _unbroadcast(g, a.data.shape),
        lambda g: _unbroadcast(g, b.data.shape),
    ))


def sub(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        return _make(a.data - b, (a,), (lambda g: g,))
    if isinstance(a, (int, float)):
        b = as_tensor(b)
        return _make(a - b.data, (b,), (lambda g: -g,))
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data
    return _make(data, (a, b), (
        lambda g: _unbroadcast(g, a.data.shape),
        lambda g: _unbroadcast(-g, b.data.shape),
    ))


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        return _make(a.data * b, (a,), (lambda g: g * b,))
    if isinstance(a, (int, float)):
        b = as_tensor(b)
        return _make(b.data * a, (b,), (lambda g: g * a,))
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    return _make(data, (a, b), (
        lambda g: _unbroadcast(g * b.data, a.data.shape),
        lambda g: _unbroadcast(g * a.data, b.data.shape),
    ))


def div(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        return mul(a, 1.0 / b)
    if isinstance(a, (int, float)):
        b = as_tensor(b)
        return _make(a / b.data, (b,), (
            lambda g: -g * a / (b.data * b.data),
        ))
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data
    return _make(data, (a, b), (
        lambda g: _unbroadcast(g / b.data, a.data.shape),
        lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
    ))


def pow_(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    data = a.data ** exponent
    return _make(data, (a,), (
        lambda g: g * exponent * a.data ** (exponent - 1),
    ))


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)
    return _make(data, (a,), (lambda g: g * data,))


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)
    return _make(data, (a,), (lambda g: g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)
    return _make(data, (a,), (lambda g: g * (0.5 / data),))


def erf(a) -> Tensor:
    a = as_tensor(a)
    data = special.erf(a.data).astype(a.data.dtype)
    coeff = a.data.dtype.type(2.0 / math.sqrt(math.pi))
    return _make(data, (a,), (
        lambda g: g * coeff * np.exp(-a.data * a.data),
    ))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)
    return _make(data, (a,), (lambda g: g * (1.0 - data * data),))


def softplus(a) -> Tensor:
    """log(1 + exp(a)), computed stably."""
    a = as_tensor(a)
    data = np.logaddexp(0.0, a.data).astype(a.data.dtype)
    return _make(data, (a,), (
        lambda g: g * special.expit(a.data).astype(a.data.dtype),
    ))


# -- linear algebra ----------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-d operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def grad_a(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        return _unbroadcast(ga, a.data.shape)

    def grad_b(g):
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(gb, b.data.shape)

    return _make(data, (a, b), (grad_a, grad_b))


def transpose(a, axes: tuple) -> Tensor:
    a = as_tensor(a)
    inv = np.argsort(axes)
    data = np.transpose(a.data, axes)
    return _make(data, (a,), (lambda g: np.transpose(g, inv),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)
    return _make(data, (a,), (lambda g: g.reshape(a.data.shape),))


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(np.asarray(g), a.data.shape).astype(a.data.dtype, copy=False)

    return _make(np.asarray(data), (a,), (vjp,))


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis] if isinstance(axis, int) else int(np.prod([a.data.shape[ax] for ax in axis]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def take(a, index) -> Tensor:
    """Differentiable numpy indexing (slices and integer arrays)."""
    a = as_tensor(a)
    data = a.data[index]

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return out

    return _make(np.asarray(data), (a,), (vjp,))


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        return vjp

    return _make(data, tuple(tensors), tuple(make_vjp(i) for i in range(len(tensors))))


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def make_vjp(i):
        def vjp(g):
            return np.take(g, i, axis=axis)

        return vjp

    return _make(data, tuple(tensors), tuple(make_vjp(i) for i in range(len(tensors))))


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    data = np.broadcast_to(a.data, shape)
    return _make(data.copy(), (a,), (lambda g: _unbroadcast(g, a.data.shape),))


# -- softmax family ----------------------------------------------------------


def softmax(a, mask=None, axis=-1) -> Tensor:
    """Row-stable softmax; ``mask`` marks permitted entries with True.

    Masked-out entries get probability exactly 0.0 (no -inf intermediates),
    so excluded values can never leak into downstream sums, even at the
    last-bit level. A row with no permitted entry raises.
    """
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=axis).all():
            raise DegenerateMaskError("softmax mask has a fully excluded row")
        shifted = np.where(mask, x, -np.inf)
        rowmax = shifted.max(axis=axis, keepdims=True)
        e = np.exp(x - rowmax, where=mask, out=np.zeros_like(x))
    else:
        rowmax = x.max(axis=axis, keepdims=True)
        e = np.exp(x - rowmax)
    denom = e.sum(axis=axis, keepdims=True)
    y = e / denom

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return y * (g - dot)

    return _make(y, (a,), (vjp,))


def logsumexp(a, axis=-1, keepdims=False) -> Tensor:
    a = as_tensor(a)
    rowmax = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - rowmax)
    s = e.sum(axis=axis, keepdims=True)
    data = np.log(s) + rowmax
    soft = e / s
    if not keepdims:
        data = np.squeeze(data, axis=axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return g * soft

    return _make(data, (a,), (vjp,))
