"""Heterogeneous stock/industry graph snapshots and metapath views.

Relations
---------
SS
    stock-stock edge with channels (sector similarity, shareholder overlap).
SI
    stock-industry edge with channels (market share, ESG governance).

Metapaths ``SS`` and ``SIS`` are compiled into stock x stock views consumed by
the structural attention layer.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

SCHEMA_VERSION = "v1"


class NodeKind(enum.Enum):
    STOCK = "stock"
    INDUSTRY = "industry"


@dataclass(frozen=True)
class NodeRef:
    kind: NodeKind
    index: int


class Metapath(str, enum.Enum):
    SS = "SS"
    SIS = "SIS"


@dataclass(frozen=True)
class GicsCode:
    """Four-level GICS code: sector, industry group, industry, sub-industry."""

    sector: str
    group: str
    industry: str
    sub_industry: str

    def __post_init__(self):
        self.levels()

    def levels(self):
        lv = (self.sector, self.group, self.industry, self.sub_industry)
        # each level must extend the one above it (GICS digits are nested prefixes)
        for upper, lower in zip(lv, lv[1:]):
            if not str(lower).startswith(str(upper)):
                raise ValueError(f"GICS levels not prefix-consistent: {lv}")
        return lv

    @classmethod
    def from_code(cls, code):
        """Build from an 8-digit GICS string like ``"45103010"``."""
        code = str(code)
        if len(code) != 8 or not code.isdigit():
            raise ValueError(f"expected an 8-digit GICS code, got {code!r}")
        return cls(code[:2], code[:4], code[:6], code)

    def __str__(self):
        return self.sub_industry


def lca_depth(a: GicsCode, b: GicsCode) -> int:
    depth = 0
    for x, y in zip(a.levels(), b.levels()):
        if x != y:
            break
        depth += 1
    return depth


def sector_sim(a: GicsCode, b: GicsCode) -> float:
    """Depth of the deepest shared GICS level divided by 4."""
    return lca_depth(a, b) / 4.0


def shareholder_sim(a: dict, b: dict) -> float:
    """Weighted Jaccard overlap of two holder -> position-weight maps."""
    for w in (*a.values(), *b.values()):
        if w < 0:
            raise ValueError("holder weights must be nonnegative")
    keys = a.keys() | b.keys()
    den = sum(max(a.get(k, 0.0), b.get(k, 0.0)) for k in keys)
    if den == 0:
        return 0.0
    num = sum(min(a[k], b[k]) for k in a.keys() & b.keys())
    return num / den


def pairwise_shareholder_sim(weights):
    """All-pairs weighted Jaccard for a dense stocks x holders weight matrix."""
    w = np.asarray(weights, dtype=float)
    if (w < 0).any():
        raise ValueError("holder weights must be nonnegative")
    num = np.minimum(w[:, None, :], w[None, :, :]).sum(-1)
    den = np.maximum(w[:, None, :], w[None, :, :]).sum(-1)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def market_shares(revenues):
    r = np.asarray(revenues, dtype=float)
    if (r < 0).any():
        raise ValueError("revenues must be nonnegative")
    total = r.sum()
    if total <= 0:
        raise ValueError("revenues sum to zero; market share undefined")
    return r / total


def market_share(revenues, i: int) -> float:
    return float(market_shares(revenues)[i])


@dataclass(frozen=True)
class GraphSnapshot:
    """One trading day of the heterogeneous graph.

    ``adj_si`` and ``edge_si`` are stock x industry; with a single global
    industry node their second axis has length 1.
    """

    date: int
    stock_features: np.ndarray  # N x F
    industry_features: np.ndarray  # I x F_I
    adj_ss: np.ndarray  # N x N bool, no diagonal
    edge_ss: np.ndarray  # N x N x 2
    adj_si: np.ndarray  # N x I bool
    edge_si: np.ndarray  # N x I x 2
    tickers: tuple = field(default=())

    @property
    def n_stocks(self):
        return self.adj_ss.shape[0]

    @property
    def n_industries(self):
        return self.adj_si.shape[1]

    def node(self, kind: NodeKind, index: int) -> NodeRef:
        limit = self.n_stocks if kind is NodeKind.STOCK else self.n_industries
        if not 0 <= index < limit:
            raise IndexError(f"{kind.value} index {index} out of range [0, {limit})")
        return NodeRef(kind, index)


def build_snapshot(date, gics, holders, revenues, esg, stock_features,
                   industry_features, membership=None, tickers=()):
    """Assemble a :class:`GraphSnapshot` from one day's raw relational inputs.

    Parameters
    ----------
    gics : sequence of GicsCode, one per stock
    holders : sequence of dict (holder id -> weight) or array (stocks x holders)
    revenues, esg : sequence of float or None, one per stock
        ``esg`` is expected already scaled to [0, 1].
    membership : bool array stocks x industries, optional
        Default ties every stock to a single global industry node.
    """
    n = len(gics)
    feats = np.asarray(stock_features, dtype=float)
    if feats.ndim != 2 or feats.shape[0] != n:
        raise ValueError(f"stock_features must be {n} x F, got {feats.shape}")
    missing = [i for i in range(n)
               if i >= len(revenues) or revenues[i] is None or i >= len(esg) or esg[i] is None]
    if missing:
        names = [tickers[i] if i < len(tickers) else i for i in missing]
        raise ValueError(f"missing revenue/ESG for stocks {names}")
    if len(holders) != n:
        raise ValueError(f"holders has {len(holders)} rows for {n} stocks")
    ind = np.atleast_2d(np.asarray(industry_features, dtype=float))
    if membership is None:
        membership = np.ones((n, 1), dtype=bool)
    membership = np.asarray(membership, dtype=bool)

    sec = np.array([[sector_sim(a, b) for b in gics] for a in gics]).reshape(n, n)
    if isinstance(holders, np.ndarray):
        sh = pairwise_shareholder_sim(holders)
    else:
        sh = np.array([[shareholder_sim(a, b) for b in holders] for a in holders]).reshape(n, n)
    edge_ss = np.stack([sec, sh], axis=-1)
    adj_ss = (edge_ss > 0).any(-1) & ~np.eye(n, dtype=bool)

    rev = np.asarray(revenues, dtype=float)
    share = np.zeros(membership.shape)
    for k in range(membership.shape[1]):
        members = membership[:, k]
        if members.any():
            share[members, k] = market_shares(rev[members])
    gov = np.asarray(esg, dtype=float)[:, None] * np.ones(membership.shape)
    edge_si = np.stack([share, gov], axis=-1) * membership[..., None]
    return GraphSnapshot(int(date), feats, ind, adj_ss, edge_ss, membership, edge_si,
                         tuple(tickers))


@dataclass(frozen=True)
class MetapathView:
    path: Metapath
    adjacency: np.ndarray  # N x N bool, diagonal true
    edge_features: np.ndarray  # N x N x 2


def sis_adjacency(adj_si):
    a = np.asarray(adj_si, dtype=int)
    return (a @ a.T) > 0


def compile_metapath(snapshot: GraphSnapshot, path) -> MetapathView:
    path = Metapath(path)
    n = snapshot.n_stocks
    eye = np.eye(n, dtype=bool)
    if path is Metapath.SS:
        adj = snapshot.adj_ss | eye
        feats = np.where(adj[..., None], snapshot.edge_ss, 0.0)
        feats[eye] = 1.0
        return MetapathView(path, adj, feats)
    m = snapshot.adj_si.astype(float)
    shared = m @ m.T  # number of industries on S->I->S paths
    adj = (shared > 0) | eye
    e = snapshot.edge_si * m[..., None]
    # mean over shared industries k of (e_ik + e_jk) / 2
    summed = np.einsum("jk,ikc->ijc", m, e) + np.einsum("ik,jkc->ijc", m, e)
    feats = np.divide(summed, 2.0 * shared[..., None], out=np.zeros((n, n, 2)),
                      where=shared[..., None] > 0)
    return MetapathView(path, adj, feats)


def graph_diameter_check(snapshot: GraphSnapshot) -> int:
    """Longest stock-to-stock shortest path in the combined SS + SI graph."""
    n, k = snapshot.n_stocks, snapshot.n_industries
    full = np.zeros((n + k, n + k), dtype=bool)
    full[:n, :n] = snapshot.adj_ss
    full[:n, n:] = snapshot.adj_si
    full[n:, :n] = snapshot.adj_si.T
    dist = shortest_path(full.astype(float), method="D", unweighted=True, directed=False)
    d = dist[:n, :n]
    if not np.isfinite(d).all():
        raise ValueError("stock graph is disconnected")
    return int(d.max())
