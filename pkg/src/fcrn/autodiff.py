"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Sized for small MLPs: a dynamic tape of Var nodes, each holding a float64
array, with gradients available for parameters and for designated input
leaves (needed by the gradient-based imputation step). All arithmetic is
64-bit for reproducibility.
"""
from __future__ import annotations

import numpy as np


class Var:
    """One node on the compute tape.

    Holds the forward value (float64 ndarray), the accumulated gradient
    after backward(), parent references, and the local backward rule.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    # -- helpers -----------------------------------------------------------

    @staticmethod
    def _lift(other):
        return other if isinstance(other, Var) else Var(other)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, self._lift(other))

    def __radd__(self, other):
        return add(self._lift(other), self)

    def __sub__(self, other):
        return add(self, neg(self._lift(other)))

    def __rsub__(self, other):
        return add(self._lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return mul(self._lift(other), self)

    def __truediv__(self, c):
        if isinstance(c, Var):
            raise TypeError("division only supported by constants")
        return mul(self, Var(1.0 / np.asarray(c, dtype=np.float64)))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, self._lift(other))

    def item(self):
        return float(self.value)


def _unbroadcast(g, shape):
    """Sum gradient g down to the given broadcast-source shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _node(value, parents, backward):
    out = Var(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(a, b):
    def backward(g, out):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.value.shape))

    return _node(a.value + b.value, (a, b), backward)


def neg(a):
    def backward(g, out):
        if a.requires_grad:
            a._accumulate(-g)

    return _node(-a.value, (a,), backward)


def mul(a, b):
    def backward(g, out):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.value.shape))

    return _node(a.value * b.value, (a, b), backward)


def matmul(a, b):
    def backward(g, out):
        if a.requires_grad:
            if b.value.ndim == 1:
                a._accumulate(np.outer(g, b.value) if a.value.ndim == 2 else g * b.value)
            else:
                a._accumulate(np.atleast_2d(g) @ b.value.T if a.value.ndim == 2 else b.value @ g)
        if b.requires_grad:
            if a.value.ndim == 1:
                b._accumulate(np.outer(a.value, g) if b.value.ndim == 2 else g * a.value)
            else:
                b._accumulate(a.value.T @ np.atleast_2d(g) if b.value.ndim == 2 else a.value.T @ g)

    return _node(a.value @ b.value, (a, b), backward)


def relu(a):
    mask = a.value > 0

    def backward(g, out):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _node(np.where(mask, a.value, 0.0), (a,), backward)


def tanh(a):
    t = np.tanh(a.value)

    def backward(g, out):
        if a.requires_grad:
            a._accumulate(g * (1.0 - t * t))

    return _node(t, (a,), backward)


def sigmoid(a):
    # stable for large |u|
    v = np.where(a.value >= 0,
                 1.0 / (1.0 + np.exp(-np.abs(a.value))),
                 np.exp(-np.abs(a.value)) / (1.0 + np.exp(-np.abs(a.value))))

    def backward(g, out):
        if a.requires_grad:
            a._accumulate(g * v * (1.0 - v))

    return _node(v, (a,), backward)


def log(a):
    def backward(g, out):
        if a.requires_grad:
            a._accumulate(g / a.value)

    return _node(np.log(a.value), (a,), backward)


def exp(a):
    v = np.exp(a.value)

    def backward(g, out):
        if a.requires_grad:
            a._accumulate(g * v)

    return _node(v, (a,), backward)


def reshape_flat(a):
    shape = a.value.shape

    def backward(g, out):
        if a.requires_grad:
            a._accumulate(g.reshape(shape))

    return _node(a.value.reshape(-1), (a,), backward)


def clamp_min(a, floor):
    mask = a.value > floor

    def backward(g, out):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _node(np.maximum(a.value, floor), (a,), backward)


def vsum(a, axis=None, keepdims=False):
    def backward(g, out):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.full_like(a.value, g))
            else:
                a._accumulate(np.broadcast_to(
                    g if keepdims else np.expand_dims(g, axis), a.value.shape).copy())

    return _node(a.value.sum(axis=axis, keepdims=keepdims), (a,), backward)


def vmean(a):
    n = a.value.size

    def backward(g, out):
        if a.requires_grad:
            a._accumulate(np.full_like(a.value, g / n))

    return _node(a.value.mean(), (a,), backward)


def softmax(a, axis=-1):
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g, out):
        if a.requires_grad:
            dot = (g * p).sum(axis=axis, keepdims=True)
            a._accumulate(p * (g - dot))

    return _node(p, (a,), backward)


def logsumexp(a, axis=-1, keepdims=False):
    m = a.value.max(axis=axis, keepdims=True)
    e = np.exp(a.value - m)
    s = e.sum(axis=axis, keepdims=True)
    p = e / s
    v = m + np.log(s)
    if not keepdims:
        v = np.squeeze(v, axis=axis)

    def backward(g, out):
        if a.requires_grad:
            gk = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(gk * p)

    return _node(v, (a,), backward)


def take_rows(a, idx):
    """Gather rows a[idx]; backward scatter-adds into the source rows."""
    idx = np.asarray(idx, dtype=np.intp)

    def backward(g, out):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            np.add.at(a.grad, idx, g)

    return _node(a.value[idx], (a,), backward)


def pick(a, col_idx):
    """Select one column per row: out[i] = a[i, col_idx[i]]."""
    col_idx = np.asarray(col_idx, dtype=np.intp)
    rows = np.arange(a.value.shape[0])

    def backward(g, out):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            np.add.at(a.grad, (rows, col_idx), g)

    return _node(a.value[rows, col_idx], (a,), backward)


def concat(parts, axis=1):
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g, out):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    return _node(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), backward)


def backward(loss):
    """Reverse accumulation from a scalar loss node through the whole tape."""
    if loss.value.ndim != 0 and loss.value.size != 1:
        raise ValueError("backward expects a scalar loss")
    order = []
    seen = set()
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss._accumulate(np.ones_like(loss.value))
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad, node)


def zero_grads(params):
    for p in params:
        p.grad = None


def glorot_uniform(fan_out, fan_in, rng):
    """Uniform init in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def dense(x, w, b):
    """Affine map x @ w.T + b for a batch (or single row) of inputs."""
    return add(matmul(x, transpose(w)), b)


def transpose(a):
    def backward(g, out):
        if a.requires_grad:
            a._accumulate(g.T)

    return _node(a.value.T, (a,), backward)


class AdamState:
    """Per-parameter first/second moment accumulators and step counter."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]


def adam_step(params, state, lr):
    """Standard bias-corrected Adam update in place; skips grad-less params."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            continue
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.value -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
