"""Causal Transformer encoder with ALiBi position bias.

Sequences are batched as ``(S, T, d)``. Parameters for block ``l`` live under
``tf.{l}.*`` plus a final layer norm ``tf.ln_f.*``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Tensor


@dataclass(frozen=True)
class AlibiSpec:
    slopes: np.ndarray  # (n_heads,)
    P: np.ndarray  # (T, T); P[i, j] = -(i - j) for j <= i, 0 above the diagonal
    mask: np.ndarray  # (T, T) bool, True where key j <= query i

    def bias(self):
        """m_h * P for every head, (n_heads, T, T)."""
        return self.slopes[:, None, None] * self.P[None]


def alibi_slopes(n_heads):
    h = np.arange(1, n_heads + 1)
    return 2.0 ** (-8.0 * h / n_heads)


def alibi_bias(window, n_heads):
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    i = np.arange(window)[:, None]
    j = np.arange(window)[None, :]
    mask = j <= i
    P = np.where(mask, -(i - j), 0).astype(float)
    return AlibiSpec(alibi_slopes(n_heads), P, mask)


def _split_heads(x, n_heads):
    S, T, d = x.shape
    return nx.transpose(x.reshape(S, T, n_heads, d // n_heads), (0, 2, 1, 3))


def temporal_attention(x, params, prefix, alibi: AlibiSpec, n_heads, last_only=False,
                       return_weights=False):
    """Multi-head causal self-attention with ALiBi on ``x`` (S, T, d).

    With ``last_only`` only the final query position is evaluated and the
    result has shape (S, 1, d).
    """
    S, T, d = x.shape
    if d % n_heads:
        raise nx.ShapeError(f"d_h={d} not divisible by n_heads={n_heads}")
    dk = d // n_heads
    xq = x[:, T - 1:, :] if last_only else x
    q = _split_heads(nx.linear(xq, params[prefix + "Wq"]), n_heads)
    k = _split_heads(nx.linear(x, params[prefix + "Wk"]), n_heads)
    v = _split_heads(nx.linear(x, params[prefix + "Wv"]), n_heads)
    bias, mask = alibi.bias(), alibi.mask
    if last_only:
        bias, mask = bias[:, T - 1:, :], mask[T - 1:, :]
    scores = (q @ nx.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dk)) + bias
    w = nx.masked_softmax(scores, mask)
    z = nx.transpose(w @ v, (0, 2, 1, 3)).reshape(S, xq.shape[1], d)
    out = nx.linear(z, params[prefix + "Wo"], params[prefix + "bo"])
    return (out, w) if return_weights else out


def encoder_block(x, params, prefix, alibi, n_heads, dropout=0.0, rng=None, last_only=False):
    a = temporal_attention(nx.layer_norm(x, params[prefix + "ln1.g"], params[prefix + "ln1.b"]),
                           params, prefix, alibi, n_heads, last_only)
    if last_only:
        x = x[:, x.shape[1] - 1:, :]
    x = x + nx.dropout(a, dropout, rng)
    h = nx.layer_norm(x, params[prefix + "ln2.g"], params[prefix + "ln2.b"])
    h = nx.gelu(nx.linear(h, params[prefix + "W1"], params[prefix + "b1"]))
    h = nx.linear(h, params[prefix + "W2"], params[prefix + "b2"])
    return x + nx.dropout(h, dropout, rng)


def transformer_encode(x, params, hp, rng=None, full_sequence=False):
    """Encode (S, T, d_h) sequences; returns the final-step vectors (S, d_h).

    ``rng`` switches on dropout (training mode). With ``full_sequence`` every
    time step is returned as (S, T, d_h) instead.
    """
    x = nx.as_tensor(x)
    alibi = alibi_bias(x.shape[1], hp.n_heads)
    rate = hp.dropout if rng is not None else 0.0
    for layer in range(hp.n_layers):
        last = not full_sequence and layer == hp.n_layers - 1
        x = encoder_block(x, params, f"tf.{layer}.", alibi, hp.n_heads, rate, rng, last)
    x = nx.layer_norm(x, params["tf.ln_f.g"], params["tf.ln_f.b"])
    return x if full_sequence else x.reshape(x.shape[0], x.shape[2])


def init_params(rng, hp):
    d, ff = hp.d_h, hp.d_ff
    out = {}

    def glorot(shape):
        lim = np.sqrt(6.0 / sum(shape))
        return Tensor(rng.uniform(-lim, lim, shape), requires_grad=True)

    def const(n, v):
        return Tensor(np.full(n, v), requires_grad=True)

    for layer in range(hp.n_layers):
        pre = f"tf.{layer}."
        for name in ("Wq", "Wk", "Wv", "Wo"):
            out[pre + name] = glorot((d, d))
        out[pre + "bo"] = const(d, 0.0)
        out[pre + "W1"] = glorot((ff, d))
        out[pre + "b1"] = const(ff, 0.0)
        out[pre + "W2"] = glorot((d, ff))
        out[pre + "b2"] = const(d, 0.0)
        for ln in ("ln1", "ln2"):
            out[f"{pre}{ln}.g"] = const(d, 1.0)
            out[f"{pre}{ln}.b"] = const(d, 0.0)
    out["tf.ln_f.g"] = const(d, 1.0)
    out["tf.ln_f.b"] = const(d, 0.0)
    return out
