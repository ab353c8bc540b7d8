"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ndarray and, when gradient recording is on and any
input requires a gradient, remembers its parents plus a closure that pushes
the output gradient back to them. :func:`backward` walks the recorded graph
in reverse topological order.

Arrays are float32 unless a wider dtype is selected with :func:`precision`
(finite-difference checks run in float64).
"""
from __future__ import annotations

import contextlib
import math

import numpy as np

from .errors import ShapeError

_state = {"grad": True, "dtype": np.float32}


@contextlib.contextmanager
def no_grad():
    prev = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = prev


@contextlib.contextmanager
def precision(dtype):
    prev = _state["dtype"]
    _state["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _state["dtype"] = prev


def default_dtype():
    return _state["dtype"]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if arr.dtype != _state["dtype"]:
            arr = arr.astype(_state["dtype"])
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

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

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = _state["grad"] and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise -----------------------------------------------------------

def add(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)
    return _result(a.data + b.data, (a, b), backward)


def neg(a):
    return scale(a, -1.0)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)
    return _result(a.data * b.data, (a, b), backward)


def scale(a, factor: float):
    def backward(g):
        _accumulate(a, g * factor)
    return _result(a.data * a.data.dtype.type(factor), (a,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a):
    """tanh approximation of GELU."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        _accumulate(a, g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner))
    return _result(out, (a,), backward)


def relu(a):
    mask = a.data > 0

    def backward(g):
        _accumulate(a, g * mask)
    return _result(a.data * mask, (a,), backward)


# -- linear algebra --------------------------------------------------------

def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            _accumulate(b, np.swapaxes(a.data, -1, -2) @ g)
    return _result(a.data @ b.data, (a, b), backward)


def linear(x, weight, bias=None):
    """``x @ weight + bias`` over the last axis of ``x``."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        out += bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g @ weight.data.T)
        g2 = g.reshape(-1, g.shape[-1])
        if weight.requires_grad:
            _accumulate(weight, x.data.reshape(-1, x.shape[-1]).T @ g2)
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g2.sum(axis=0))
    return _result(out, parents, backward)


# -- reductions and shape ops ----------------------------------------------

def sum_(a, axis=None, keepdims=False):
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))
    return _result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    def backward(g):
        _accumulate(a, g.reshape(a.shape))
    return _result(a.data.reshape(shape), (a,), backward)


def transpose(a, axes=None):
    inverse = None if axes is None else np.argsort(axes)

    def backward(g):
        _accumulate(a, np.transpose(g, inverse))
    return _result(np.transpose(a.data, axes), (a,), backward)


def _is_basic_index(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, slice)) or p is Ellipsis or p is None for p in parts)


def slice_(a, idx):
    basic = _is_basic_index(idx)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        _accumulate(a, full)
    return _result(a.data[idx], (a,), backward)


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or any(x != y for i, (x, y) in enumerate(zip(ref, other))
                                         if i != axis % len(ref)):
            raise ShapeError(f"concat: shapes {tuple(ref)} and {t.shape} differ off axis {axis}")
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=axis)):
            _accumulate(t, part)
    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def embedding(table, ids):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"embedding ids must lie in [0, {table.shape[0]})")

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        _accumulate(table, full)
    return _result(table.data[ids], (table,), backward)


# -- normalisation and probabilities ----------------------------------------

def softmax(a, axis=-1, mask=None):
    """Softmax along ``axis``; entries where ``mask`` is False get probability 0."""
    x = a.data
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    x = x - x.max(axis=axis, keepdims=True)
    e = np.exp(x)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        _accumulate(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))
    return _result(y, (a,), backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    data = x.data
    mu = data.mean(axis=-1, keepdims=True)
    xc = data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).reshape(-1, data.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            _accumulate(beta, g.reshape(-1, data.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gh = g * gamma.data
            dx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
            _accumulate(x, dx)
    return _result(out, (x, gamma, beta), backward)


def cross_entropy(logits, targets, reduction="mean"):
    """Token cross-entropy of ``(N, V)`` logits against integer targets."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    z = logits.data
    if z.ndim != 2 or z.shape[0] != targets.shape[0]:
        raise ShapeError(f"cross_entropy: logits {z.shape} vs targets {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= z.shape[1]):
        raise ValueError(f"cross_entropy: target ids must lie in [0, {z.shape[1]})")
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(targets.size)
    total = -logp[rows, targets].sum()
    denom = targets.size if reduction == "mean" else 1
    out = np.asarray(total / denom, dtype=z.dtype)

    def backward(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        _accumulate(logits, grad * (g / denom))
    return _result(out, (logits,), backward)


# -- driver ----------------------------------------------------------------

def backward(loss: Tensor):
    """Populate ``.grad`` on every tensor that requires it and feeds ``loss``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            if node._parents:
                # interior node: release the buffer and the graph edge
                node.grad = None
                node._backward = None
                node._parents = ()
