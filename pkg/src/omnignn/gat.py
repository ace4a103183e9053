"""Edge-aware multi-head graph attention over metapath views.

All functions are batched over leading axes (typically trading days), so a
whole window of snapshots goes through one call. Parameters live in a flat
``dict[str, Tensor]`` under names ``gat.{layer}.{path}.{W,We,a,b,Wi}`` and
``sem.{layer}.{q,V.<path>}``.

The SIS path runs on an augmented node set: the N stocks followed by the
industry nodes. Stocks are linked by the compiled SIS adjacency, each stock to
its industries, and every node to itself. This is how industry features reach
stock embeddings; the SS path never sees them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .market_graph import Metapath, compile_metapath
from .numerics import Tensor


@dataclass(frozen=True)
class GraphBatch:
    """Day-stacked inputs for :func:`structural_forward`."""

    x: np.ndarray  # D x N x F
    xi: np.ndarray  # D x I x F_I
    views: dict  # Metapath -> (adjacency D x M x M, edge features D x M x M x 2)

    @property
    def n_days(self):
        return self.x.shape[0]

    @property
    def n_stocks(self):
        return self.x.shape[1]

    def subset(self, days):
        days = np.asarray(days)
        return GraphBatch(self.x[days], self.xi[days],
                          {p: (a[days], e[days]) for p, (a, e) in self.views.items()})


def augmented_sis(snapshot):
    """SIS adjacency/edges over stocks + industry nodes (see module docstring)."""
    view = compile_metapath(snapshot, Metapath.SIS)
    n, k = snapshot.n_stocks, snapshot.n_industries
    m = n + k
    adj = np.zeros((m, m), dtype=bool)
    adj[:n, :n] = view.adjacency
    adj[:n, n:] = snapshot.adj_si
    adj[n:, :n] = snapshot.adj_si.T
    adj[n:, n:] = np.eye(k, dtype=bool)
    edge = np.zeros((m, m, 2))
    edge[:n, :n] = view.edge_features
    edge[:n, n:] = snapshot.edge_si
    edge[n:, :n] = snapshot.edge_si.transpose(1, 0, 2)
    members = snapshot.adj_si.sum(axis=0)
    own = snapshot.edge_si.sum(axis=0) / np.maximum(members, 1)[:, None]
    edge[n + np.arange(k), n + np.arange(k)] = own
    return adj, edge


def stack_snapshots(snapshots, metapaths=(Metapath.SS, Metapath.SIS)):
    metapaths = [Metapath(p) for p in metapaths]
    x = np.stack([s.stock_features for s in snapshots])
    xi = np.stack([s.industry_features for s in snapshots])
    views = {}
    for p in metapaths:
        if p is Metapath.SS:
            vs = [compile_metapath(s, p) for s in snapshots]
            views[p] = (np.stack([v.adjacency for v in vs]), np.stack([v.edge_features for v in vs]))
        else:
            parts = [augmented_sis(s) for s in snapshots]
            views[p] = (np.stack([a for a, _ in parts]), np.stack([e for _, e in parts]))
    return GraphBatch(x, xi, views)


# single-layer pieces -------------------------------------------------------

def project_nodes(h, W):
    """Per-head projection: h (..., M, F), W (H, F', F) -> (..., H, M, F')."""
    h = nx.as_tensor(h)
    H, Fp, F = W.shape
    lead = h.shape[:-1]
    out = nx.linear(h, W.reshape(H * Fp, F)).reshape(lead + (H, Fp))
    nd = len(lead)
    return nx.transpose(out, tuple(range(nd - 1)) + (nd - 1 + 1, nd - 1, nd + 1))


def attention_scores(wh, edge, a, We, slope=0.2):
    """LeakyReLU of ``a . (W h_i || W h_j || W_e e_ij)`` for every pair.

    wh : (..., H, M, F') projected nodes; edge : (..., M, M, C) constants;
    a : (H, 3F'); We : (H, F', C). Returns (..., H, M, M).
    """
    H, Fp = wh.shape[-3], wh.shape[-1]
    if a.shape != (H, 3 * Fp):
        raise nx.ShapeError(f"attention vector shape {a.shape}, expected {(H, 3 * Fp)}")
    edge = np.asarray(edge, dtype=float)
    C = edge.shape[-1]
    a_self = a[:, :Fp].reshape(H, Fp, 1)
    a_nbr = a[:, Fp:2 * Fp].reshape(H, Fp, 1)
    a_edge = a[:, 2 * Fp:].reshape(H, Fp, 1)
    s_self = wh @ a_self  # (..., H, M, 1)
    s_nbr = nx.swapaxes(wh @ a_nbr, -1, -2)  # (..., H, 1, M)
    # a_e . (W_e e) == e . (W_e^T a_e): contract the edge channels first
    c = (nx.transpose(We, (0, 2, 1)) @ a_edge).reshape(H, C).T  # (C, H)
    lead = edge.shape[:-1]
    s_edge = nx.as_tensor(edge.reshape(-1, C)) @ c  # (... M M, H)
    s_edge = s_edge.reshape(lead + (H,))
    nd = len(lead)
    s_edge = nx.transpose(s_edge, tuple(range(nd - 2)) + (nd, nd - 2, nd - 1))
    return nx.leaky_relu(s_self + s_nbr + s_edge, slope)


def normalize_attention(scores, adjacency):
    adjacency = np.asarray(adjacency, dtype=bool)
    return nx.masked_softmax(scores, np.expand_dims(adjacency, -3))


def aggregate(alpha, wh, bias=None):
    """Average over heads of ``alpha @ Wh``; output (..., M, F')."""
    out = (alpha @ wh).mean(axis=-3)
    return out if bias is None else out + bias


def gat_layer(params, prefix, h, adjacency, edge, h_ind=None, slope=0.2):
    wh = project_nodes(h, params[prefix + "W"])
    if h_ind is not None:
        wh = nx.concat([wh, project_nodes(h_ind, params[prefix + "Wi"])], axis=-2)
    scores = attention_scores(wh, edge, params[prefix + "a"], params[prefix + "We"], slope)
    alpha = normalize_attention(scores, adjacency)
    return aggregate(alpha, wh, params[prefix + "b"])


def combine_metapaths(embeddings, params=None, prefix="", return_weights=False):
    """Semantic attention over metapaths.

    For each day, path weights are ``softmax_P(q . tanh(V_P mean_i h_P[i]))``
    and are shared across nodes. A single path passes through with weight 1.
    """
    if not embeddings:
        raise ValueError("combine_metapaths needs at least one metapath embedding")
    paths = list(embeddings)
    if len(paths) == 1:
        out = embeddings[paths[0]]
        return (out, {paths[0]: 1.0}) if return_weights else out
    q = params[prefix + "q"]
    logits = []
    for p in paths:
        summary = embeddings[p].mean(axis=-2)  # (..., F')
        t = nx.tanh(nx.linear(summary, params[f"{prefix}V.{Metapath(p).value}"]))
        logits.append((t * q).sum(axis=-1, keepdims=True))
    w = nx.masked_softmax(nx.concat(logits, axis=-1), np.ones(1, dtype=bool))
    out = None
    for k, p in enumerate(paths):
        term = embeddings[p] * nx.reshape(w[..., k], w.shape[:-1] + (1, 1))
        out = term if out is None else out + term
    if return_weights:
        return out, {p: w.data[..., k] for k, p in enumerate(paths)}
    return out


def structural_forward(params, batch: GraphBatch, hp, metapaths):
    """Stack ``hp.gat_layers`` GAT layers per metapath; returns (D, N, d_h)."""
    metapaths = [Metapath(p) for p in metapaths]
    if not metapaths:
        raise ValueError("structural_forward needs at least one metapath")
    n = batch.n_stocks
    h = nx.as_tensor(batch.x)
    h_ind = nx.as_tensor(batch.xi)
    for layer in range(hp.gat_layers):
        outs, ind_next = {}, None
        for p in metapaths:
            adj, edge = batch.views[p]
            prefix = f"gat.{layer}.{p.value}."
            if p is Metapath.SIS:
                full = gat_layer(params, prefix, h, adj, edge, h_ind, hp.slope)
                outs[p] = full[..., :n, :]
                ind_next = full[..., n:, :]
            else:
                outs[p] = gat_layer(params, prefix, h, adj, edge, slope=hp.slope)
        h = combine_metapaths(outs, params, f"sem.{layer}.")
        if ind_next is not None:
            h_ind = ind_next
        if layer < hp.gat_layers - 1:
            h = nx.leaky_relu(h, hp.slope)
            if ind_next is not None:
                h_ind = nx.leaky_relu(h_ind, hp.slope)
    return h


def init_params(rng, hp, n_features, n_industry_features, metapaths, n_industries=1):
    """Glorot-uniform GAT and semantic-attention parameters."""
    metapaths = [Metapath(p) for p in metapaths]
    H, d = hp.gat_heads, hp.d_h
    out = {}

    def glorot(shape, fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return Tensor(rng.uniform(-lim, lim, shape), requires_grad=True)

    for layer in range(hp.gat_layers):
        f_in = n_features if layer == 0 else d
        fi_in = n_industry_features if layer == 0 else d
        for p in metapaths:
            pre = f"gat.{layer}.{p.value}."
            out[pre + "W"] = glorot((H, d, f_in), f_in, d)
            out[pre + "We"] = glorot((H, d, 2), 2, d)
            out[pre + "a"] = glorot((H, 3 * d), 3 * d, 1)
            out[pre + "b"] = Tensor(np.zeros(d), requires_grad=True)
            if p is Metapath.SIS:
                out[pre + "Wi"] = glorot((H, d, fi_in), fi_in, d)
        if len(metapaths) > 1:
            out[f"sem.{layer}.q"] = glorot((d,), d, 1)
            for p in metapaths:
                out[f"sem.{layer}.V.{p.value}"] = glorot((d, d), d, d)
    return out
