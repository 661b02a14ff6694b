"""Dense tensors with tape-based reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array plus an optional gradient buffer.
Operations executed while a :class:`Tape` is active record their backward
rule on that tape; :func:`backward` replays the records in exact reverse
order and accumulates gradients additively into every ``requires_grad``
tensor (an explicit zero step resets them, see :func:`zero_grads`).

Layout convention used across the project: sequences are time-major,
i.e. a sequence of n feature vectors is an ``(n, d)`` array and reductions
over features act on the last axis.
"""

from __future__ import annotations

import threading

import numpy as np

from .. import kernels


class ShapeMismatchError(ValueError):
    pass


class LossNotScalarError(ValueError):
    pass


class EmptyPoolError(ValueError):
    pass


class Tensor:
    """Dense real array with an optional, lazily allocated gradient."""

    __slots__ = ("data", "requires_grad", "grad", "_traced")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._traced = False

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

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; the free functions below carry the semantics
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive; use mul + reciprocal scalars")
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis=axis)

    def mean(self, axis=None):
        return tmean(self, axis=axis)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


class Tape:
    """Ordered record of primitive ops; confined to one logical thread."""

    __slots__ = ("_records",)

    def __init__(self):
        self._records = []

    def __len__(self):
        return len(self._records)

    def __enter__(self):
        _state().stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _state().stack.pop()
        return False


_LOCAL = threading.local()


def _state():
    if not hasattr(_LOCAL, "stack"):
        _LOCAL.stack = []
    return _LOCAL


def _tape():
    stack = _state().stack
    return stack[-1] if stack else None


def _wants(t):
    return isinstance(t, Tensor) and (t.requires_grad or t._traced)


def _result(data, inputs, tape):
    out = Tensor(data)
    if tape is not None and any(_wants(t) for t in inputs):
        out._traced = True
    return out


def _record(tape, out, fn):
    if out._traced:
        tape._records.append((out, fn))


def _unbroadcast(g, shape):
    """Sum gradient over axes that were broadcast in the forward op."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(tape, loss):
    """Populate ``grad`` of every ``requires_grad`` tensor reachable from loss.

    Gradients add onto whatever is already stored, so two calls without an
    intervening :func:`zero_grads` double every entry.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise LossNotScalarError(f"loss must be a scalar tensor, got size {getattr(loss, 'size', '?')}")
    grads = {id(loss): np.ones_like(loss.data)}
    holders = {id(loss): loss}

    def accum(t, g):
        if not _wants(t):
            return
        tid = id(t)
        prev = grads.get(tid)
        grads[tid] = g if prev is None else prev + g
        holders[tid] = t

    for out, fn in reversed(tape._records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        holder = holders.pop(id(out), None)
        if holder is not None and holder.requires_grad:
            if holder.grad is None:
                holder.grad = np.zeros_like(holder.data)
            holder.grad += g
        fn(g, accum)

    for tid, t in holders.items():
        if t.requires_grad:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad += grads[tid]


def zero_grads(params):
    for p in params:
        p.zero_grad()


def _as_tensor_or_scalar(x):
    if isinstance(x, Tensor):
        return x, None
    return None, float(x)


def add(a, b):
    bt, bs = _as_tensor_or_scalar(b)
    data = a.data + (bt.data if bt is not None else bs)
    tape = _tape()
    out = _result(data, (a, bt), tape)
    if out._traced:
        a_shape, b_shape = a.shape, bt.shape if bt is not None else None

        def fn(g, accum):
            accum(a, _unbroadcast(g, a_shape))
            if bt is not None:
                accum(bt, _unbroadcast(g, b_shape))

        _record(tape, out, fn)
    return out


def sub(a, b):
    bt, bs = _as_tensor_or_scalar(b)
    data = a.data - (bt.data if bt is not None else bs)
    tape = _tape()
    out = _result(data, (a, bt), tape)
    if out._traced:
        a_shape, b_shape = a.shape, bt.shape if bt is not None else None

        def fn(g, accum):
            accum(a, _unbroadcast(g, a_shape))
            if bt is not None:
                accum(bt, _unbroadcast(-g, b_shape))

        _record(tape, out, fn)
    return out


def mul(a, b):
    bt, bs = _as_tensor_or_scalar(b)
    if bt is None:
        return scale(a, bs)
    data = a.data * bt.data
    tape = _tape()
    out = _result(data, (a, bt), tape)
    if out._traced:
        a_data, b_data = a.data, bt.data

        def fn(g, accum):
            accum(a, _unbroadcast(g * b_data, a_data.shape))
            accum(bt, _unbroadcast(g * a_data, b_data.shape))

        _record(tape, out, fn)
    return out


def scale(a, s):
    s = float(s)
    tape = _tape()
    out = _result(a.data * s, (a,), tape)
    if out._traced:
        _record(tape, out, lambda g, accum: accum(a, g * s))
    return out


def matmul(a, b):
    """Matrix product; 2-d or batched 3-d with matching batch extents."""
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeMismatchError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    data = a.data @ b.data
    tape = _tape()
    out = _result(data, (a, b), tape)
    if out._traced:
        a_data, b_data = a.data, b.data

        def fn(g, accum):
            accum(a, _unbroadcast(g @ np.swapaxes(b_data, -1, -2), a_data.shape))
            accum(b, _unbroadcast(np.swapaxes(a_data, -1, -2) @ g, b_data.shape))

        _record(tape, out, fn)
    return out


def reshape(a, shape):
    tape = _tape()
    out = _result(a.data.reshape(shape), (a,), tape)
    if out._traced:
        old = a.shape
        _record(tape, out, lambda g, accum: accum(a, g.reshape(old)))
    return out


def transpose(a, axes=None):
    tape = _tape()
    out = _result(np.transpose(a.data, axes), (a,), tape)
    if out._traced:
        inv = None if axes is None else np.argsort(axes)
        _record(tape, out, lambda g, accum: accum(a, np.transpose(g, inv)))
    return out


def concat(tensors, axis=0):
    tape = _tape()
    out = _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, tape)
    if out._traced:
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def fn(g, accum):
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                accum(t, piece)

        _record(tape, out, fn)
    return out


def take_rows(a, idx):
    """Row gather ``a[idx]``; the gradient scatter-adds into duplicate rows."""
    idx = np.asarray(idx, dtype=np.int64)
    tape = _tape()
    out = _result(a.data[idx], (a,), tape)
    if out._traced:
        shape = a.shape

        def fn(g, accum):
            ga = np.zeros(shape, dtype=g.dtype)
            np.add.at(ga, idx, g)
            accum(a, ga)

        _record(tape, out, fn)
    return out


def softmax(x, axis=-1):
    """Stable softmax along ``axis``: slices sum to one."""
    nd = x.ndim
    if not -nd <= axis < nd:
        raise ShapeMismatchError(f"softmax axis {axis} invalid for shape {x.shape}")
    axis = axis % nd
    moved = np.moveaxis(x.data, axis, -1)
    flat = np.ascontiguousarray(moved.reshape(-1, moved.shape[-1]))
    y2d = kernels.softmax_fwd(flat)
    data = np.moveaxis(y2d.reshape(moved.shape), -1, axis)
    tape = _tape()
    out = _result(data, (x,), tape)
    if out._traced:
        mshape = moved.shape

        def fn(g, accum):
            g2d = np.ascontiguousarray(np.moveaxis(g, axis, -1).reshape(-1, mshape[-1]))
            gx = kernels.softmax_bwd(y2d, g2d)
            accum(x, np.moveaxis(gx.reshape(mshape), -1, axis))

        _record(tape, out, fn)
    return out


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to mean 0 / variance 1, then apply affine.

    The denominator is sqrt(var + eps), so constant vectors map to zero.
    """
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeMismatchError(f"layer_norm affine shape {gain.shape}/{bias.shape} vs feature extent {n}")
    flat = np.ascontiguousarray(x.data.reshape(-1, n))
    y2d, xhat, inv_std = kernels.layernorm_fwd(flat, gain.data, bias.data, eps)
    tape = _tape()
    out = _result(y2d.reshape(x.shape), (x, gain, bias), tape)
    if out._traced:
        shape = x.shape

        def fn(g, accum):
            g2d = np.ascontiguousarray(g.reshape(-1, n))
            gx, ggain, gbias = kernels.layernorm_bwd(g2d, xhat, inv_std, gain.data)
            accum(x, gx.reshape(shape))
            accum(gain, ggain)
            accum(bias, gbias)

        _record(tape, out, fn)
    return out


def gelu(x):
    flat = np.ascontiguousarray(x.data.reshape(-1))
    y = kernels.gelu_fwd(flat).reshape(x.shape)
    tape = _tape()
    out = _result(y, (x,), tape)
    if out._traced:
        shape = x.shape

        def fn(g, accum):
            gx = kernels.gelu_bwd(flat, np.ascontiguousarray(g.reshape(-1)))
            accum(x, gx.reshape(shape))

        _record(tape, out, fn)
    return out


def mean_pool(x, mask=None):
    """Mean over the time axis (rows) of an ``(n, d)`` sequence."""
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeMismatchError(f"mean_pool expects a non-empty (n, d) input, got {x.shape}")
    if mask is None:
        keep = np.arange(x.shape[0])
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (x.shape[0],):
            raise ShapeMismatchError(f"mask shape {mask.shape} vs {x.shape[0]} positions")
        keep = np.flatnonzero(mask)
        if keep.size == 0:
            raise EmptyPoolError("all positions masked out")
    count = keep.size
    data = x.data[keep].mean(axis=0)
    tape = _tape()
    out = _result(data, (x,), tape)
    if out._traced:
        shape = x.shape

        def fn(g, accum):
            gx = np.zeros(shape, dtype=g.dtype)
            gx[keep] = g / count
            accum(x, gx)

        _record(tape, out, fn)
    return out


def tsum(x, axis=None):
    tape = _tape()
    out = _result(x.data.sum(axis=axis), (x,), tape)
    if out._traced:
        shape = x.shape

        def fn(g, accum):
            if axis is None:
                accum(x, np.broadcast_to(g, shape).copy())
            else:
                accum(x, np.broadcast_to(np.expand_dims(g, axis), shape).copy())

        _record(tape, out, fn)
    return out


def tmean(x, axis=None):
    n = x.size if axis is None else x.shape[axis]
    return scale(tsum(x, axis=axis), 1.0 / n)


def sigmoid(x):
    data = 1.0 / (1.0 + np.exp(-x.data))
    tape = _tape()
    out = _result(data, (x,), tape)
    if out._traced:
        _record(tape, out, lambda g, accum: accum(x, g * data * (1.0 - data)))
    return out


def log(x):
    tape = _tape()
    out = _result(np.log(x.data), (x,), tape)
    if out._traced:
        _record(tape, out, lambda g, accum: accum(x, g / x.data))
    return out


def softplus(x):
    """log(1 + exp(x)) computed stably; note -log(sigmoid(x)) == softplus(-x)."""
    data = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    tape = _tape()
    out = _result(data, (x,), tape)
    if out._traced:
        sig = 1.0 / (1.0 + np.exp(-x.data))
        _record(tape, out, lambda g, accum: accum(x, g * sig))
    return out


def cross_entropy(logits, targets):
    """Mean negative log-likelihood of ``targets`` under row-wise softmax.

    logits: (t, v); targets: t integer class ids.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeMismatchError(f"cross_entropy shapes: logits {logits.shape}, targets {targets.shape}")
    if targets.size == 0:
        raise ValueError("cross_entropy: empty target")
    t = logits.shape[0]
    probs = kernels.softmax_fwd(np.ascontiguousarray(logits.data))
    picked = probs[np.arange(t), targets]
    data = np.asarray(-np.log(np.maximum(picked, np.finfo(probs.dtype).tiny)).mean(), dtype=logits.dtype)
    tape = _tape()
    out = _result(data, (logits,), tape)
    if out._traced:

        def fn(g, accum):
            gx = probs.copy()
            gx[np.arange(t), targets] -= 1.0
            accum(logits, gx * (g / t))

        _record(tape, out, fn)
    return out


def dropout(x, p, rng, training):
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p == 0.0:
        return x
    mask = (rng.uniform(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    tape = _tape()
    out = _result(x.data * mask, (x,), tape)
    if out._traced:
        _record(tape, out, lambda g, accum: accum(x, g * mask))
    return out
