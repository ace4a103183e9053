from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros(p.shape) for k, p in params.items()},
                   {k: np.zeros(p.shape) for k, p in params.items()}, 0)


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4


def adam_step(params, grads, state, hp=AdamConfig()):
    """One bias-corrected Adam update with L2 added to the gradient.

    ``params`` maps names to :class:`Tensor`; ``grads`` maps the same names to
    arrays. Returns ``(new_params, new_state)``; inputs are left untouched.
    """
    t = state.step + 1
    new_m, new_v, new_p = {}, {}, {}
    c1 = 1.0 - hp.beta1 ** t
    c2 = 1.0 - hp.beta2 ** t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        g = g + hp.weight_decay * p.data
        m = hp.beta1 * state.m[name] + (1.0 - hp.beta1) * g
        v = hp.beta2 * state.v[name] + (1.0 - hp.beta2) * g * g
        new_m[name], new_v[name] = m, v
        if hp.lr == 0.0:
            new_p[name] = p
            continue
        step = hp.lr * (m / c1) / (np.sqrt(v / c2) + hp.eps)
        new_p[name] = Tensor(p.data - step, requires_grad=p.requires_grad)
    return new_p, AdamState(new_m, new_v, t)
