from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class PCABasis:
    mean: np.ndarray
    components: np.ndarray  # features x k, orthonormal columns
    explained_variance: np.ndarray
    explained_ratio: float

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) @ self.components

    def inverse_transform(self, Z):
        return np.asarray(Z) @ self.components.T + self.mean


def pca_fit(X, variance_target=0.95):
    """Fit principal axes keeping the shortest prefix reaching ``variance_target``.

    Eigenvalues below 1e-10 are dropped before the explained-variance ratio is
    computed, so rank-deficient inputs are fine.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError(f"pca needs a 2-d array with >= 2 samples, got shape {X.shape}")
    if not 0.0 < variance_target <= 1.0:
        raise ValueError(f"variance_target must lie in (0, 1], got {variance_target}")
    mu = X.mean(axis=0)
    cov = np.cov(X - mu, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > EIG_FLOOR
    vals, vecs = vals[keep], vecs[:, keep]
    if vals.size == 0:
        raise ValueError("pca input has no variance")
    # deterministic sign: largest-magnitude loading positive
    flip = np.sign(vecs[np.abs(vecs).argmax(axis=0), np.arange(vecs.shape[1])])
    vecs = vecs * flip
    ratios = np.cumsum(vals) / vals.sum()
    k = int(np.searchsorted(ratios, variance_target - 1e-12) + 1)
    k = min(k, vals.size)
    return PCABasis(mu, vecs[:, :k], vals[:k], float(ratios[k - 1]))


def pca_fit_transform(X, variance_target=0.95):
    basis = pca_fit(X, variance_target)
    return basis.transform(X), basis
