"""Minimal reverse-mode differentiation over float64 numpy arrays.

Only the operations the network needs are supported.  Operations executed
inside an active :class:`Tape` are recorded in order; :func:`backward`
replays them in reverse.
"""

import threading

import numpy as np

from . import kernels

_local = threading.local()


class ShapeError(ValueError):
    pass


class Tensor:
    """A float64 array plus an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; nesting is allowed and the innermost tape
    receives the records.
    """

    def __init__(self):
        self.nodes = []
        self._produced = set()

    def __enter__(self):
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def record(self, op, out, inputs, backward_fn):
        self.nodes.append((op, out, inputs, backward_fn))
        self._produced.add(id(out))

    def __len__(self):
        return len(self.nodes)

    def produced(self, t):
        return id(t) in self._produced


def active_tape():
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def _emit(op, data, inputs, backward_fn):
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        tape.record(op, out, inputs, backward_fn)
    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# operations

def matmul(a, b):
    """Matrix product over the last two axes, broadcasting leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    if B.ndim == 2 and A.ndim > 2:
        # batch folded into the row axis: one GEMM each way
        k, n = B.shape
        A2 = A.reshape(-1, k)
        out = (A2 @ B).reshape(A.shape[:-1] + (n,))

        def back(g):
            g2 = g.reshape(-1, n)
            return (g2 @ B.T).reshape(A.shape), A2.T @ g2

        return _emit("matmul", out, (a, b), back)

    if A.ndim == 2 and B.ndim > 2:
        # left matrix acting on every batch item: fold batch into columns
        m, k = A.shape
        lead, n = B.shape[:-2], B.shape[-1]
        Bc = np.moveaxis(B, -2, 0).reshape(k, -1)
        out = np.moveaxis((A @ Bc).reshape((m,) + lead + (n,)), 0, -2)

        def back(g):
            gc = np.moveaxis(g, -2, 0).reshape(m, -1)
            gb = np.moveaxis((A.T @ gc).reshape((k,) + lead + (n,)), 0, -2)
            return gc @ Bc.T, gb

        return _emit("matmul", out, (a, b), back)

    def back(g):
        ga = _unbroadcast(g @ np.swapaxes(B, -1, -2), A.shape)
        gb = _unbroadcast(np.swapaxes(A, -1, -2) @ g, B.shape)
        return ga, gb

    return _emit("matmul", A @ B, (a, b), back)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    out = a.data + b.data
    return _emit("add", out, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    out = a.data - b.data
    return _emit("sub", out, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def concat_rows(blocks, axis=-2):
    """Stack blocks along the row axis (second to last by default)."""
    blocks = [as_tensor(b) for b in blocks]
    if not blocks:
        raise ShapeError("concat_rows needs at least one block")
    ax = axis % blocks[0].data.ndim
    ref = blocks[0].shape
    for b in blocks[1:]:
        if b.data.ndim != len(ref) or any(
                b.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat_rows column mismatch: {ref} vs {b.shape}")
    sizes = [b.shape[ax] for b in blocks]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([b.data for b in blocks], axis=ax)
    return _emit("concat_rows", out, tuple(blocks),
                 lambda g: tuple(np.split(g, splits, axis=ax)))


def reshape(a, shape):
    a = as_tensor(a)
    orig = a.shape
    return _emit("reshape", a.data.reshape(shape), (a,),
                 lambda g: (g.reshape(orig),))


def transpose(a, axes):
    a = as_tensor(a)
    inv = np.argsort(axes)
    return _emit("transpose", np.transpose(a.data, axes), (a,),
                 lambda g: (np.transpose(g, inv),))


def slice_axis(a, index, axis):
    """Select one index along ``axis`` (the axis is dropped)."""
    a = as_tensor(a)
    shape = a.shape

    def back(g):
        full = np.zeros(shape)
        idx = [slice(None)] * len(shape)
        idx[axis] = index
        full[tuple(idx)] = g
        return (full,)

    return _emit("slice", np.take(a.data, index, axis=axis), (a,), back)


def take(a, indices, axis):
    """Gather along ``axis``; repeated indices accumulate in the gradient."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    shape = a.shape

    def back(g):
        full = np.zeros(shape)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return _emit("take", np.take(a.data, indices, axis=axis), (a,), back)


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _emit("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def absolute(a):
    a = as_tensor(a)
    s = np.sign(a.data)
    return _emit("abs", np.abs(a.data), (a,), lambda g: (g * s,))


def total(a):
    a = as_tensor(a)
    shape = a.shape
    return _emit("sum", np.asarray(a.data.sum()), (a,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a):
    a = as_tensor(a)
    shape, n = a.shape, a.size
    return _emit("mean", np.asarray(a.data.sum() / n), (a,),
                 lambda g: (np.full(shape, float(g) / n),))


def local_mix(A, V):
    """Per-joint 3x3 mixing of a (B, J, 3, H) tensor by (J, 3, 3) matrices."""
    A, V = as_tensor(A), as_tensor(V)
    if A.data.ndim != 3 or A.shape[1:] != (3, 3):
        raise ShapeError(f"local adjacency must be (J, 3, 3), got {A.shape}")
    if V.data.ndim != 4 or V.shape[1] != A.shape[0] or V.shape[2] != 3:
        raise ShapeError(f"local_mix input {V.shape} incompatible with {A.shape}")
    Ad, Vd = A.data, V.data
    return _emit("local_mix", kernels.local_mix(Ad, Vd), (A, V),
                 lambda g: kernels.local_mix_backward(Ad, Vd, g))


def joint_norms(X):
    """Euclidean norms of (B, J, 3, T) coordinates over the xyz axis."""
    X = as_tensor(X)
    if X.data.ndim != 4 or X.shape[2] != 3:
        raise ShapeError(f"joint_norms needs (B, J, 3, T), got {X.shape}")
    Xd = X.data
    r = kernels.group3_norm(Xd)
    return _emit("joint_norms", r, (X,),
                 lambda g: (kernels.group3_norm_backward(Xd, r, g),))


class BatchNormState:
    """Running statistics for :func:`batch_norm`."""

    def __init__(self, n, momentum=0.1, eps=1e-5):
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.momentum = momentum
        self.eps = eps

    def copy(self):
        s = BatchNormState(len(self.running_mean), self.momentum, self.eps)
        s.running_mean = self.running_mean.copy()
        s.running_var = self.running_var.copy()
        return s


def batch_norm(X, gamma, beta, state, train=True):
    """Normalize each of the N features of a (batch, N, H) tensor.

    In train mode the statistics are taken jointly over the batch and hidden
    axes and the running averages are updated (biased variance in both
    places).  In eval mode the running statistics are used.
    """
    X, gamma, beta = as_tensor(X), as_tensor(gamma), as_tensor(beta)
    if X.data.ndim != 3 or X.shape[1] != gamma.shape[0] or gamma.shape != beta.shape:
        raise ShapeError(f"batch_norm shapes: X {X.shape}, gamma {gamma.shape}, beta {beta.shape}")
    Xd, gd, bd = X.data, gamma.data, beta.data
    if train:
        mu, var = kernels.bn_stats(Xd)
        m = state.momentum
        state.running_mean = (1.0 - m) * state.running_mean + m * mu
        state.running_var = (1.0 - m) * state.running_var + m * var
    else:
        mu, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (Xd - mu[None, :, None]) * inv_std[None, :, None]
    out = xhat * gd[None, :, None] + bd[None, :, None]

    if train:
        def back(g):
            dX, dgamma, dbeta = kernels.bn_backward(g, xhat, gd, inv_std)
            return dX, dgamma, dbeta
    else:
        def back(g):
            dX = g * (gd * inv_std)[None, :, None]
            return dX, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2))

    return _emit("batch_norm", out, (X, gamma, beta), back)


# ---------------------------------------------------------------------------

def backward(tape, loss, params=None):
    """Gradients of scalar ``loss`` for every tensor in ``params``.

    ``params`` defaults to every leaf with ``requires_grad`` that the tape
    touched.  Parameters that did not influence the loss get zero arrays.
    Returns a dict keyed by tensor identity (tensors hash by id).
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    if not tape.produced(loss):
        raise ValueError("loss was not produced on this tape")

    if params is None:
        seen, params = set(), []
        for _, out, inputs, _ in tape.nodes:
            for t in inputs:
                if t.requires_grad and not tape.produced(t) and id(t) not in seen:
                    seen.add(id(t))
                    params.append(t)

    grads = {id(loss): np.ones_like(loss.data)}
    for op, out, inputs, back in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        parts = back(g)
        for t, gi in zip(inputs, parts):
            if not t.requires_grad or gi is None:
                continue
            prev = grads.get(id(t))
            grads[id(t)] = gi if prev is None else prev + gi

    return {p: grads.get(id(p), np.zeros_like(p.data)).reshape(p.shape) for p in params}
