"""Immutable float64 tensors with a reverse-mode tape.

Operations are recorded only while a :class:`Tape` is active and at least one
input requires a gradient. Outside a tape every op is a plain numpy call.
"""
from __future__ import annotations

import numpy as np


class NonFiniteError(ValueError):
    pass


class ShapeError(ValueError):
    pass


_ACTIVE: list["Tape"] = []


class Tape:
    """Ordered record of differentiable primitives.

    Use as a context manager; nodes are appended in creation order, which is
    already a topological order of the computation.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()
        return False

    def __len__(self):
        return len(self.nodes)


def active_tape():
    return _ACTIVE[-1] if _ACTIVE else None


class Tensor:
    """A float64 array value with optional gradient bookkeeping.

    Parameters
    ----------
    data : array_like
        Values; copied to a contiguous float64 array and checked for NaN/Inf.
    requires_grad : bool
        Mark as a leaf whose gradient is wanted by :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "_parents", "_backward", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False):
        arr = np.array(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor data contains NaN or Inf")
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @classmethod
    def _result(cls, arr, parents, backward_fn):
        """Build an op output, attaching it to the active tape when needed."""
        out = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError("operation produced NaN or Inf")
        arr.setflags(write=False)
        out.data = arr
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        tape = active_tape()
        if tape is not None and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
            tape.nodes.append(out)
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.item())

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    # arithmetic --------------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

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

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def back(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * out / b.data, b.shape))

    return Tensor._result(out, (a, b), back)


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    return Tensor._result(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def matmul(a, b):
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._result(a.data @ b.data, (a, b), back)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return Tensor._result(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    return Tensor._result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    inv = None if axes is None else tuple(np.argsort(axes))
    return Tensor._result(np.transpose(a.data, axes), (a,),
                          lambda g: (np.transpose(g, inv),))


def swapaxes(a, i, j):
    a = as_tensor(a)
    return Tensor._result(np.swapaxes(a.data, i, j), (a,),
                          lambda g: (np.swapaxes(g, i, j),))


def take(a, idx):
    """Basic or advanced indexing; the gradient scatter-adds into place."""
    a = as_tensor(a)

    def back(g):
        out = np.zeros(a.shape)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor._result(a.data[idx], (a,), back)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=axis))

    return Tensor._result(np.concatenate([t.data for t in tensors], axis=axis),
                          tuple(tensors), back)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._result(np.stack([t.data for t in tensors], axis=axis),
                          tuple(tensors), back)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return Tensor._result(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor._result(out, (a,), lambda g: (0.5 * g / out,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._result(out, (a,), lambda g: (g * (1.0 - out * out),))


def where(cond, a, b):
    """Select from ``a`` where ``cond`` else ``b``; ``cond`` is constant."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    return Tensor._result(
        np.where(cond, a.data, b.data), (a, b),
        lambda g: (_unbroadcast(np.where(cond, g, 0.0), a.shape),
                   _unbroadcast(np.where(cond, 0.0, g), b.shape)),
    )


def backward(loss, tape, wrt=None):
    """Reverse-mode sweep over ``tape`` from a scalar ``loss``.

    Parameters
    ----------
    loss : Tensor
        Scalar (size-1) tensor produced while ``tape`` was active.
    tape : Tape
    wrt : sequence of Tensor, optional
        Leaves whose gradients to return, in order. Leaves that do not reach
        ``loss`` get zero arrays. When omitted a dict keyed by ``id(leaf)`` is
        returned for every leaf that received gradient.

    Returns
    -------
    list of ndarray or dict
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones(loss.shape)}
    leaves = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if parent._backward is None:
                leaves[key] = parent
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.array(pg, dtype=np.float64)
    if loss._backward is None and loss.requires_grad:
        leaves[id(loss)] = loss
    if wrt is None:
        return {k: grads[k] for k in leaves}
    return [grads.get(id(w), np.zeros(w.shape)).reshape(w.shape) for w in wrt]
