"""Reverse-mode automatic differentiation over dense numpy arrays.

Define-by-run: every op builds a node holding its inputs and a closure
that pushes the output adjoint back to them; Tensor.backward() walks the
recorded graph in reverse topological order.  Training runs in float32;
wrap code in `with precision("float64"):` for gradient checking.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_DEFAULT_DTYPE = np.float32


def default_dtype():
    return _DEFAULT_DTYPE


@contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for newly created tensors."""
    global _DEFAULT_DTYPE
    old = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
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
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def _accumulate(self, g):
        # First contribution is stored as-is (may alias an adjoint that has
        # already been consumed -- reverse topological order makes that safe);
        # later contributions add in place.
        if self.grad is None:
            self.grad = g
        elif self.grad.flags.writeable:
            self.grad += g
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.array(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data, _parents=tuple(parents), _backward=None)
    if out.requires_grad:
        out._backward = backward(out)
    return out


# -- primitive ops ------------------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))
        return run

    return _make(a.data + b.data, (a, b), bw)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))
        return run

    return _make(a.data * b.data, (a, b), bw)


def scale(a, s: float):
    a = _as_tensor(a)

    def bw(out):
        def run(g):
            a._accumulate(g * s)
        return run

    return _make(a.data * a.data.dtype.type(s), (a,), bw)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(out):
        def run(g):
            if a.requires_grad:
                ga = g @ np.swapaxes(b.data, -1, -2) if b.ndim > 1 else np.outer(g, b.data)
                a._accumulate(_unbroadcast(ga, a.shape))
            if b.requires_grad:
                if a.ndim > 1:
                    gb = np.swapaxes(a.data, -1, -2) @ g
                else:
                    gb = np.outer(a.data, g)
                b._accumulate(_unbroadcast(gb, b.shape))
        return run

    return _make(a.data @ b.data, (a, b), bw)


def transpose(a, axes):
    a = _as_tensor(a)
    inverse = np.argsort(axes)

    def bw(out):
        def run(g):
            a._accumulate(g.transpose(inverse))
        return run

    return _make(a.data.transpose(axes), (a,), bw)


def reshape(a, shape):
    a = _as_tensor(a)

    def bw(out):
        def run(g):
            a._accumulate(g.reshape(a.shape))
        return run

    return _make(a.data.reshape(shape), (a,), bw)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(out):
        def run(g):
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    t._accumulate(piece)
        return run

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def slice_(a, index):
    a = _as_tensor(a)

    def bw(out):
        def run(g):
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            a._accumulate(full)
        return run

    return _make(a.data[index], (a,), bw)


def take(a, indices, axis=0):
    """Embedding-style lookup along an axis."""
    a = _as_tensor(a)
    indices = np.asarray(indices)

    def bw(out):
        def run(g):
            full = np.zeros_like(a.data)
            np.add.at(full, indices if axis == 0 else (slice(None), indices), g)
            a._accumulate(full)
        return run

    return _make(np.take(a.data, indices, axis=axis), (a,), bw)


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0

    def bw(out):
        def run(g):
            a._accumulate(g * mask)
        return run

    return _make(a.data * mask, (a,), bw)


def sigmoid(a):
    a = _as_tensor(a)
    y = _stable_sigmoid(a.data)

    def bw(out):
        def run(g):
            a._accumulate(g * y * (1 - y))
        return run

    return _make(y, (a,), bw)


def softmax(a):
    """Softmax over the last axis."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(out):
        def run(g):
            inner = (g * y).sum(axis=-1, keepdims=True)
            a._accumulate(y * (g - inner))
        return run

    return _make(y, (a,), bw)


def layer_norm(a, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    a, gamma, beta = _as_tensor(a), _as_tensor(gamma), _as_tensor(beta)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + a.data.dtype.type(eps))
    xhat = xc * inv

    def bw(out):
        def run(g):
            if gamma.requires_grad:
                gamma._accumulate(_unbroadcast(g * xhat, gamma.shape))
            if beta.requires_grad:
                beta._accumulate(_unbroadcast(g, beta.shape))
            if a.requires_grad:
                gx = g * gamma.data
                m1 = gx.mean(axis=-1, keepdims=True)
                m2 = (gx * xhat).mean(axis=-1, keepdims=True)
                a._accumulate(inv * (gx - m1 - xhat * m2))
        return run

    return _make(xhat * gamma.data + beta.data, (a, gamma, beta), bw)


def mean(a, axis=None):
    a = _as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def bw(out):
        def run(g):
            if axis is None:
                a._accumulate(np.full_like(a.data, 1.0 / count) * g)
            else:
                a._accumulate(np.broadcast_to(
                    np.expand_dims(g, axis) / count, a.shape).copy())
        return run

    return _make(a.data.mean(axis=axis), (a,), bw)


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    # log(1 + e^x), stable for large |x|
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0)


def weighted_bce(logits, targets, pos_weight=1.0):
    """Mean binary cross-entropy from logits with a positive-class weight.

    loss = mean( pos_weight * t * softplus(-x) + (1 - t) * softplus(x) ),
    the log-sum-exp form of -[w t log s(x) + (1-t) log(1-s(x))].
    """
    logits = _as_tensor(logits)
    targets = np.asarray(targets)
    if targets.shape != logits.shape:
        raise ValueError(f"shape mismatch: logits {logits.shape}, targets {targets.shape}")
    if not np.isin(targets, (0, 1)).all():
        raise ValueError("targets must be binary")
    if pos_weight <= 0:
        raise ValueError(f"pos_weight must be positive, got {pos_weight}")
    t = targets.astype(logits.data.dtype)
    x = logits.data
    loss = (pos_weight * t * _softplus(-x) + (1 - t) * _softplus(x)).mean()
    n = x.size

    def bw(out):
        def run(g):
            s = _stable_sigmoid(x)
            logits._accumulate(g * (-pos_weight * t * (1 - s) + (1 - t) * s) / n)
        return run

    return _make(loss, (logits,), bw)
