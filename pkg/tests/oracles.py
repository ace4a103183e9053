"""Independent reference implementations used as test oracles."""
import math
from collections import deque

import numpy as np


def central_diff(f, x, step=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        up = f(x)
        flat[i] = old - step
        down = f(x)
        flat[i] = old
        gf[i] = (up - down) / (2 * step)
    return g


def rel_error(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def matmul_loops(a, b):
    n, k = len(a), len(a[0])
    m = len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def jacobi_eigh(S, tol=1e-14, sweeps=100):
    """Cyclic Jacobi rotations for a symmetric matrix; eigenvalues descending."""
    A = np.array(S, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        off = math.sqrt(sum(A[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
                V = V @ J
    vals = np.diag(A)
    order = np.argsort(vals)[::-1]
    return vals[order], V[:, order]


def ranks(x):
    """Average ranks (1-based) by explicit tie-group scan."""
    idx = sorted(range(len(x)), key=lambda i: x[i])
    r = [0.0] * len(x)
    i = 0
    while i < len(idx):
        j = i
        while j + 1 < len(idx) and x[idx[j + 1]] == x[idx[i]]:
            j += 1
        for k in range(i, j + 1):
            r[idx[k]] = (i + j) / 2 + 1
        i = j + 1
    return r


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    return 0.0 if den == 0 else num / den


def spearman(a, b):
    return pearson(ranks(list(a)), ranks(list(b)))


def sis_paths_bruteforce(members):
    """Enumerate every stock -> industry -> stock walk."""
    n, k = members.shape
    adj = np.eye(n, dtype=bool)
    for i in range(n):
        for ind in range(k):
            if not members[i, ind]:
                continue
            for j in range(n):
                if members[j, ind]:
                    adj[i, j] = True
    return adj


def bfs_diameter(snap):
    n, k = snap.n_stocks, snap.n_industries
    nbrs = {v: set() for v in range(n + k)}
    for i in range(n):
        for j in range(n):
            if snap.adj_ss[i, j]:
                nbrs[i].add(j)
        for c in range(k):
            if snap.adj_si[i, c]:
                nbrs[i].add(n + c)
                nbrs[n + c].add(i)
    worst = 0
    for src in range(n):
        dist = {src: 0}
        q = deque([src])
        while q:
            v = q.popleft()
            for u in nbrs[v]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    q.append(u)
        worst = max(worst, max(dist[j] for j in range(n)))
    return worst
