"""
Graph attention and causal time attention
=========================================

The structural layer attends over graph neighbours, the temporal layer over
earlier days. ALiBi replaces positional embeddings with a distance penalty.
"""

import numpy as np

from omnignn import Hyperparams, Metapath, gat, temporal
from omnignn.synthdata import preprocess_window
from omnignn.numerics import Tensor
from omnignn.synthdata import UniverseSpec, generate

series = generate(UniverseSpec(n_stocks=6, n_days=80, seed=3))
# fit the feature pipeline on days 0-69, then build the graphs for days 70-74
snaps = preprocess_window(series, (0, 70), (70, 75)).snapshots(series)
batch = gat.stack_snapshots(snaps)
hp = Hyperparams(d_h=8, gat_heads=2, gat_layers=2, n_heads=2, window=5)
rng = np.random.default_rng(0)
F, F_I = batch.x.shape[-1], batch.xi.shape[-1]
params = gat.init_params(rng, hp, F, F_I, (Metapath.SS, Metapath.SIS))

# first-layer SS attention on the last day, one row per stock
adj, edge = batch.views[Metapath.SS]
pre = "gat.0.SS."
wh = gat.project_nodes(Tensor(batch.x), params[pre + "W"])
alpha = gat.normalize_attention(gat.attention_scores(wh, edge, params[pre + "a"],
                                                     params[pre + "We"]), adj)
np.set_printoptions(precision=3, suppress=True)
print("SS attention, head 0\n", alpha.data[-1, 0])
print("row sums", alpha.data[-1, 0].sum(-1))

emb = gat.structural_forward(params, batch, hp, (Metapath.SS, Metapath.SIS))
print("embeddings", emb.shape)

# ALiBi: head h penalises a key t steps back by m_h * t
alibi = temporal.alibi_bias(hp.window, hp.n_heads)
print("slopes", alibi.slopes)
tp = temporal.init_params(rng, hp)
seq = Tensor(np.repeat(rng.normal(size=(1, 1, hp.d_h)), hp.window, axis=1))
_, w = temporal.temporal_attention(seq, tp, "tf.0.", alibi, hp.n_heads,
                                   return_weights=True)
# identical inputs: the weights show the recency preference alone
print("last-step weights per head\n", w.data[0, :, -1])
