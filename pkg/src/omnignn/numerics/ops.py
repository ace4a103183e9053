"""Neural-network primitives built on :mod:`omnignn.numerics.tensor`."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor


class EmptyAttentionRow(ValueError):
    """Raised when a softmax row has no unmasked entry (an isolated node)."""


def leaky_relu(x, slope=0.2):
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must lie in (0, 1), got {slope}")
    x = as_tensor(x)
    d = np.where(x.data > 0, 1.0, slope)
    return Tensor._result(x.data * d, (x,), lambda g: (g * d,))


def masked_softmax(scores, mask, axis=-1):
    """Softmax along ``axis`` restricted to entries where ``mask`` is true.

    Masked entries come out exactly 0. Each row is shifted by its maximum over
    unmasked entries before exponentiation.
    """
    scores = as_tensor(scores)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    if not mask.any(axis=axis).all():
        raise EmptyAttentionRow("attention row with no unmasked entry (isolated node)")
    s = np.where(mask, scores.data, -np.inf)
    s = s - s.max(axis=axis, keepdims=True)
    e = np.where(mask, np.exp(s), 0.0)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._result(out, (scores,), back)


def linear(x, weight, bias=None):
    """Affine map ``x @ weight.T + bias`` over the last axis of ``x``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f"linear: input shape {x.shape} incompatible with weight shape {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"linear: bias shape {bias.shape} vs weight shape {weight.shape}")
        out = out + bias.data
        parents = parents + (bias,)

    def back(g):
        gx = g @ wd
        g2 = g.reshape(-1, g.shape[-1])
        gw = g2.T @ xd.reshape(-1, xd.shape[-1])
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor._result(out, parents, back)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x):
    """GELU, tanh approximation."""
    x = as_tensor(x)
    xd = x.data
    x2 = xd * xd
    u = _GELU_C * xd * (1.0 + 0.044715 * x2)
    t = np.tanh(u)
    out = 0.5 * xd * (1.0 + t)

    def back(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return Tensor._result(out, (x,), back)


def layer_norm(x, scale, offset, eps=1e-5):
    """Normalize over the last axis, then apply ``scale`` and ``offset``."""
    x, scale, offset = as_tensor(x), as_tensor(scale), as_tensor(offset)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * scale.data + offset.data

    def back(g):
        n = xd.shape[-1]
        gh = g * scale.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).sum(axis=-1, keepdims=True) / n)
        flat = g.reshape(-1, n)
        return gx, (flat * xhat.reshape(-1, n)).sum(axis=0), flat.sum(axis=0)

    return Tensor._result(out, (x, scale, offset), back)


def dropout(x, rate, rng):
    """Inverted dropout; identity when ``rng`` is None or ``rate`` is 0."""
    if rng is None or rate <= 0.0:
        return as_tensor(x)
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


def mse(pred, target, weight=None):
    """Mean squared error; ``weight`` is an optional 0/1 mask of counted entries."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=float)
    if weight is None:
        weight = np.ones(pred.shape)
    weight = np.asarray(weight, dtype=float)
    n = weight.sum()
    if n == 0:
        raise ValueError("mse over an empty selection")
    diff = pred.data - target
    out = (weight * diff * diff).sum() / n
    return Tensor._result(out, (pred,), lambda g: (g * 2.0 * weight * diff / n,))
