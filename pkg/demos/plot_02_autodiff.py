"""
Reverse-mode gradients on a tape
================================

Every op records itself on the active tape. Walking the tape backwards gives
gradients, which we compare with central differences.
"""

import numpy as np

from omnignn import numerics as nx
from omnignn.numerics import Tape, Tensor, backward

rng = np.random.default_rng(1)
W = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
x = rng.normal(size=(5, 4))


def f(w):
    return (nx.leaky_relu(nx.linear(Tensor(x), w), 0.2) ** 2).sum()


with Tape() as tape:
    out = f(W)
(g,) = backward(out, tape, [W])

# central differences, one coordinate at a time
num = np.zeros_like(W.data)
for idx in np.ndindex(W.shape):
    up, down = W.data.copy(), W.data.copy()
    up[idx] += 1e-5
    down[idx] -= 1e-5
    num[idx] = (f(Tensor(up)).item() - f(Tensor(down)).item()) / 2e-5
print("max abs difference", np.abs(g - num).max())
