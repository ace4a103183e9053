"""
Building a market graph
=======================

One trading day becomes a heterogeneous graph: stocks linked to each other
by sector and shareholder overlap, and to a single industry node by market
share and governance score.
"""

import numpy as np

from omnignn import GicsCode, Metapath, build_snapshot, compile_metapath
from omnignn.market_graph import graph_diameter_check, sector_sim, shareholder_sim

# GICS similarity is the depth of the shared prefix, scaled to [0, 1]
a, b = GicsCode.from_code("45103010"), GicsCode.from_code("45102010")
print("sector similarity", sector_sim(a, b))

# shareholder overlap is a weighted Jaccard on position weights
print("holder overlap", shareholder_sim({"fund_a": 0.6, "fund_b": 0.4}, {"fund_a": 0.2}))

rng = np.random.default_rng(0)
codes = ["45103010", "45103020", "45202030", "10101010", "10102010"]
gics = [GicsCode.from_code(c) for c in codes]
# tech and energy names hold disjoint funds, so no SS edge crosses the groups
holders = [{"f1": 1.0}, {"f1": 0.5, "f2": 0.5}, {"f2": 1.0}, {"f3": 1.0}, {"f3": 0.3, "f4": 0.7}]
snap = build_snapshot(0, gics, holders, revenues=rng.uniform(1, 50, 5), esg=rng.random(5),
                      stock_features=rng.normal(size=(5, 3)), industry_features=rng.normal(size=(1, 2)))
print("SS adjacency\n", snap.adj_ss.astype(int))

# SIS joins every pair of stocks that share an industry, here all of them
for path in (Metapath.SS, Metapath.SIS):
    view = compile_metapath(snap, path)
    print(path.value, "edges:", int(view.adjacency.sum()))

# through the industry node no two stocks are more than 2 hops apart
print("diameter", graph_diameter_check(snap))
