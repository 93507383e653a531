"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op accepts arrays with arbitrary leading (batch) axes and broadcasts
the way numpy does; gradients are summed back to the operand shapes.
"""

from __future__ import annotations

import contextlib

import numpy as np


class ShapeError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """A named leaf tensor whose gradient is accumulated across backward calls."""

    __slots__ = ("name",)

    def __init__(self, name, data):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward_fn)
    return Tensor(data)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    """Hadamard product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,))


def tabs(a):
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def square(a):
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sqrt(a):
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,))


def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), backward_fn)


def transpose(a):
    """Swap the last two axes."""
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a, shape):
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def moveaxis(a, src, dst):
    return _make(np.moveaxis(a.data, src, dst), (a,), lambda g: (np.moveaxis(g, dst, src),))


def take(a, idx):
    """Basic (non-fancy) indexing; gradient scatters back into a zero array."""
    out = a.data[idx]

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[idx] += g
        return (full,)

    return _make(out, (a,), backward_fn)


def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward_fn)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def concat(xs, axis=-1):
    """Join along ``axis`` (default: the feature axis). Other axes must agree."""
    xs = [as_tensor(x) for x in xs]
    nd = xs[0].ndim
    ax = axis % nd
    ref = xs[0].shape
    for x in xs[1:]:
        if x.ndim != nd or any(x.shape[i] != ref[i] for i in range(nd) if i != ax):
            raise ShapeError(f"concat: mismatched shapes {[x.shape for x in xs]}")
    out = np.concatenate([x.data for x in xs], axis=ax)
    bounds = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(out, tuple(xs), backward_fn)


def concat_last_axis(xs):
    return concat(xs, axis=-1)


def stack(xs, axis=0):
    xs = [as_tensor(x) for x in xs]
    if len({x.shape for x in xs}) != 1:
        raise ShapeError(f"stack: mismatched shapes {[x.shape for x in xs]}")
    out = np.stack([x.data for x in xs], axis=axis)

    def backward_fn(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(out, tuple(xs), backward_fn)


# --------------------------------------------------------------- activations

def relu(a):
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}


def elementwise(x, f):
    try:
        return _ACTIVATIONS[f](x)
    except KeyError:
        raise ValueError(f"unknown activation {f!r}; expected one of {sorted(_ACTIVATIONS)}") from None


def softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), backward_fn)


def softmax_rows(x):
    return softmax(x, axis=-1)


def straight_through_step(z, threshold=0.5):
    """Hard indicator ``z > threshold`` whose backward is the identity."""
    return _make((z.data > threshold).astype(np.float64), (z,), lambda g: (g,))


def linear(x, W, b=None):
    """Affine map along the last axis (a 1x1 convolution over features)."""
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear: input feature size {x.shape[-1]} != weight rows {W.shape[0]} "
                         f"(input {x.shape}, weight {W.shape})")
    out = matmul(x, W) if x.ndim >= 2 else matmul(reshape(x, (1, -1)), W)[0]
    if b is not None:
        out = add(out, b)
    return out


# ------------------------------------------------------------------ backward

def _topo_order(root):
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(root):
    """Accumulate d(root)/d(leaf) into every reachable leaf's ``grad``."""
    if root.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(_topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad = node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grad(params):
    for p in params:
        p.zero_grad()


def grad_check(f, params, h=1e-5):
    """Max over entries of |analytic - central difference| / max(1, |central difference|).

    ``f`` maps nothing to a scalar Tensor and must be deterministic.
    """
    params = list(params)
    zero_grad(params)
    backward(f())
    worst = 0.0
    with no_grad():
        for p in params:
            analytic = p.grad.copy()
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = f().item()
                flat[i] = orig - h
                fm = f().item()
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * h)
                err = abs(analytic.flat[i] - numeric) / max(1.0, abs(numeric))
                worst = max(worst, err)
    return worst
