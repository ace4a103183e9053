"""Synthetic IT-sector market with planted structure, and feature preprocessing.

Daily log-returns follow a one-factor model::

    r[t, i] = s * beta[i] * f[t] + (1 - s) * eps[t, i]

with ``s = factor_strength``. Two channels carry tomorrow's information:
stock channel 0 is a noisy copy of tomorrow's idiosyncratic shock and
industry channel 0 is a noisy copy of tomorrow's industry factor. Everything
else (momentum, volatility, valuation, sentiment, filler noise) is realistic
looking but uninformative about the next day.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .market_graph import GicsCode, build_snapshot
from .numerics import pca_fit

log = logging.getLogger(__name__)

DAILY_VOL = 0.02
SUB_INDUSTRIES = ("45102010", "45103010", "45103020", "45202030", "45203010",
                  "45203015", "45301010", "45301020")
STOCK_FEATURE_NAMES = ("planted", "momentum", "volatility", "valuation", "sentiment")
INDUSTRY_FEATURE_NAMES = ("planted", "etf_return", "etf_volatility", "etf_momentum")


@dataclass(frozen=True)
class UniverseSpec:
    n_stocks: int = 10
    n_days: int = 1000
    seed: int = 0
    factor_strength: float = 0.8
    n_raw_features: int = 8
    n_holders: int = 30
    signal_noise: float = 0.5
    # (start_day, end_day, factor volatility multiplier)
    regime: tuple | None = None

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self):
        errors = []
        if self.n_stocks < 2:
            errors.append(f"n_stocks must be >= 2, got {self.n_stocks}")
        if self.n_days < 60:
            errors.append(f"n_days must be >= 60, got {self.n_days}")
        if not 0.0 <= self.factor_strength <= 1.0:
            errors.append(f"factor_strength must lie in [0, 1], got {self.factor_strength}")
        if self.n_raw_features < 2:
            errors.append(f"n_raw_features must be >= 2, got {self.n_raw_features}")
        if self.n_holders < 1:
            errors.append(f"n_holders must be >= 1, got {self.n_holders}")
        if self.regime is not None and len(self.regime) != 3:
            errors.append("regime must be (start_day, end_day, vol_multiplier)")
        return errors


@dataclass(frozen=True)
class MarketSeries:
    prices: np.ndarray  # days x stocks
    index_level: np.ndarray  # days
    raw_features: np.ndarray  # days x stocks x F
    industry_features: np.ndarray  # days x F_I
    holders: np.ndarray  # days x stocks x holders
    revenues: np.ndarray  # days x stocks
    esg: np.ndarray  # days x stocks, raw 0-100 governance score
    gics: tuple
    tickers: tuple
    dates: tuple = field(default=())
    betas: np.ndarray | None = None
    factor: np.ndarray | None = None

    @property
    def n_days(self):
        return self.prices.shape[0]

    @property
    def n_stocks(self):
        return self.prices.shape[1]

    def log_returns(self):
        return np.diff(np.log(self.prices), axis=0)


def _ar1(rng, shape, phi, sd):
    out = np.empty(shape)
    out[0] = rng.normal(0.0, sd / np.sqrt(1 - phi * phi), shape[1:])
    for t in range(1, shape[0]):
        out[t] = phi * out[t - 1] + rng.normal(0.0, sd, shape[1:])
    return out


def _rolling_std(x, w):
    out = np.zeros_like(x)
    for t in range(x.shape[0]):
        seg = x[max(0, t - w + 1):t + 1]
        out[t] = seg.std(axis=0) if len(seg) > 1 else 0.0
    return out


def _trailing_sum(x, w):
    c = np.cumsum(np.concatenate([np.zeros((1,) + x.shape[1:]), x]), axis=0)
    idx = np.arange(1, x.shape[0] + 1)
    return c[idx] - c[np.maximum(idx - w, 0)]


def generate(spec: UniverseSpec) -> MarketSeries:
    """Simulate a :class:`MarketSeries`; identical seeds give identical arrays."""
    rng = np.random.default_rng(spec.seed)
    D, N, s = spec.n_days, spec.n_stocks, spec.factor_strength

    betas = rng.uniform(0.25, 1.75, N)
    vol = np.ones(D)
    if spec.regime is not None:
        a, b, mult = spec.regime
        vol[int(a):int(b)] = float(mult)
    factor = rng.normal(0.0, DAILY_VOL, D) * vol
    idio = rng.normal(0.0, DAILY_VOL, (D, N))
    # day-0 returns are unused so prices start at their initial level
    rets = s * betas * factor[:, None] + (1.0 - s) * idio
    rets[0] = 0.0
    prices = rng.uniform(20.0, 200.0, N) * np.exp(np.cumsum(rets, axis=0))
    index_rets = rets.mean(axis=1) + 0.25 * DAILY_VOL * rng.normal(size=D)
    index_rets[0] = 0.0
    index_level = 3000.0 * np.exp(np.cumsum(index_rets))

    def shift_next(x):
        nxt = np.zeros_like(x)
        nxt[:-1] = x[1:]
        return nxt

    noise = spec.signal_noise
    F = spec.n_raw_features
    feats = np.empty((D, N, F))
    feats[..., 0] = shift_next(idio) / DAILY_VOL + noise * rng.normal(size=(D, N))
    past = _trailing_sum(rets, 5)
    families = [
        past / DAILY_VOL,
        _rolling_std(rets, 20) / DAILY_VOL,
        np.cumsum(rng.normal(0, 0.05, (D, N)), axis=0) + rng.normal(0, 1, N),
        _ar1(rng, (D, N), 0.9, 0.3),
    ]
    for c in range(1, F):
        feats[..., c] = families[c - 1] if c - 1 < len(families) else rng.normal(size=(D, N))

    f_next = shift_next(factor / vol) / DAILY_VOL
    ind = np.stack([
        f_next + noise * rng.normal(size=D),
        factor / DAILY_VOL,
        _rolling_std(factor[:, None], 20)[:, 0] / DAILY_VOL,
        _trailing_sum(index_rets[:, None], 5)[:, 0] / DAILY_VOL,
    ], axis=1)

    # sparse institutional book with slowly drifting position weights
    held = rng.random((N, spec.n_holders)) < 0.4
    held[np.arange(N), rng.integers(0, spec.n_holders, N)] = True
    base = rng.gamma(2.0, 1.0, (N, spec.n_holders)) * held
    drift = np.exp(np.cumsum(rng.normal(0, 0.01, (D, N, spec.n_holders)), axis=0))
    holders = base[None] * drift
    holders = holders / holders.sum(axis=2, keepdims=True)

    rev0 = rng.lognormal(9.0, 1.0, N)
    n_q = D // 63 + 1
    growth = np.exp(np.cumsum(rng.normal(0.02, 0.05, (n_q, N)), axis=0))
    revenues = (rev0 * growth)[np.arange(D) // 63]

    n_m = D // 21 + 1
    esg_m = np.clip(60 + _ar1(rng, (n_m, N), 0.8, 5.0), 0, 100)
    esg = esg_m[np.arange(D) // 21]

    codes = rng.choice(len(SUB_INDUSTRIES), N)
    gics = tuple(GicsCode.from_code(SUB_INDUSTRIES[c]) for c in codes)
    tickers = tuple(f"S{i:02d}" for i in range(N))
    return MarketSeries(prices, index_level, feats, ind, holders, revenues, esg, gics,
                        tickers, tuple(range(D)), betas, factor)


# preprocessing ---------------------------------------------------------------

@dataclass(frozen=True)
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray  # bool mask of retained columns


def fit_zscore(x, min_std=1e-12):
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    keep = sd > min_std
    if not keep.all():
        log.warning("dropping zero-variance feature columns %s", np.flatnonzero(~keep).tolist())
    return ZScoreStats(mu, np.where(keep, sd, 1.0), keep)


def zscore(x, stats: ZScoreStats):
    return ((np.asarray(x, dtype=float) - stats.mean) / stats.std)[..., stats.keep]


def fit_winsor_bounds(x, lower_pct=0.01, upper_pct=0.99):
    if not 0.0 <= lower_pct < upper_pct <= 1.0:
        raise ValueError(f"need 0 <= lower < upper <= 1, got {lower_pct}, {upper_pct}")
    x = np.asarray(x, dtype=float)
    return (np.quantile(x, lower_pct, axis=0, method="linear"),
            np.quantile(x, upper_pct, axis=0, method="linear"))


def winsorize(x, lower_pct=0.01, upper_pct=0.99, fit_on=None):
    """Clamp to empirical quantiles of ``fit_on`` (defaults to ``x`` itself)."""
    lo, hi = fit_winsor_bounds(x if fit_on is None else fit_on, lower_pct, upper_pct)
    return np.clip(np.asarray(x, dtype=float), lo, hi)


@dataclass(frozen=True)
class FeaturePipeline:
    """Normalize -> winsorize -> PCA, fitted once on a training slice."""

    zstats: ZScoreStats
    lo: np.ndarray
    hi: np.ndarray
    basis: object

    @classmethod
    def fit(cls, train_rows, variance_target=0.95, lower_pct=0.01, upper_pct=0.99):
        zs = fit_zscore(train_rows)
        z = zscore(train_rows, zs)
        lo, hi = fit_winsor_bounds(z, lower_pct, upper_pct)
        basis = pca_fit(np.clip(z, lo, hi), variance_target)
        return cls(zs, lo, hi, basis)

    def transform(self, rows):
        return self.basis.transform(np.clip(zscore(rows, self.zstats), self.lo, self.hi))


@dataclass(frozen=True)
class PreparedWindow:
    """Preprocessed features for days ``[start, stop)`` of a series."""

    start: int
    stop: int
    stock_features: np.ndarray  # days x stocks x k
    industry_features: np.ndarray  # days x 1 x k_I
    esg_scaled: np.ndarray  # days x stocks in [0, 1]
    stock_pipeline: FeaturePipeline
    industry_pipeline: FeaturePipeline
    esg_range: tuple

    def snapshots(self, series: MarketSeries):
        out = []
        for d in range(self.start, self.stop):
            k = d - self.start
            out.append(build_snapshot(
                d, series.gics, series.holders[d], series.revenues[d], self.esg_scaled[k],
                self.stock_features[k], self.industry_features[k], tickers=series.tickers))
        return out


def preprocess_window(series: MarketSeries, train, span=None, variance_target=0.95,
                      lower_pct=0.01, upper_pct=0.99):
    """Fit the feature pipeline on ``train`` days and apply it to ``span`` days.

    ``train`` and ``span`` are ``(start, stop)`` day ranges; ``span`` defaults
    to the whole series.
    """
    a, b = train
    lo_d, hi_d = span if span is not None else (0, series.n_days)
    if not (0 <= a < b <= series.n_days and 0 <= lo_d < hi_d <= series.n_days):
        raise ValueError(f"window {train}/{span} outside series of {series.n_days} days")
    F = series.raw_features.shape[2]
    sp = FeaturePipeline.fit(series.raw_features[a:b].reshape(-1, F), variance_target,
                             lower_pct, upper_pct)
    ip = FeaturePipeline.fit(series.industry_features[a:b], variance_target,
                             lower_pct, upper_pct)
    raw = series.raw_features[lo_d:hi_d]
    stock = sp.transform(raw.reshape(-1, F)).reshape(raw.shape[0], raw.shape[1], -1)
    ind = ip.transform(series.industry_features[lo_d:hi_d])[:, None, :]
    e_lo, e_hi = float(series.esg[a:b].min()), float(series.esg[a:b].max())
    width = e_hi - e_lo if e_hi > e_lo else 1.0
    esg = np.clip((series.esg[lo_d:hi_d] - e_lo) / width, 0.0, 1.0)
    return PreparedWindow(lo_d, hi_d, stock, ind, esg, sp, ip, (e_lo, e_hi))
