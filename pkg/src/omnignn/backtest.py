"""Rolling-window evaluation: schedule, metrics, and report assembly."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from . import gat
from . import model as mdl
from .synthdata import MarketSeries, preprocess_window

log = logging.getLogger(__name__)

MONTH = 21
METRICS = ("ic", "ir", "cr", "precision_at_k")


# schedule -----------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    id: int
    train: tuple
    val: tuple
    test: tuple


def schedule(n_days, train_len=6 * MONTH, val_len=2 * MONTH, test_len=2 * MONTH):
    """All train/val/test triples that fit, advancing by ``test_len``."""
    need = train_len + val_len + test_len
    if min(train_len, val_len, test_len) < 1:
        raise ValueError("window segment lengths must be >= 1")
    if n_days < need:
        raise ValueError(f"need at least {need} days for one window, got {n_days}")
    out = []
    start = 0
    while start + need <= n_days:
        a, b, c = start, start + train_len, start + train_len + val_len
        out.append(Window(len(out), (a, b), (b, c), (c, c + test_len)))
        start += test_len
    return out


def schedule_calendar(dates, train_months=6, val_months=2, test_months=2):
    """Calendar-month windows over sorted ``datetime.date``-like ``dates``."""
    months = np.array([d.year * 12 + d.month - 1 for d in dates])
    if (np.diff(months) < 0).any():
        raise ValueError("dates must be sorted")
    first, last = months[0], months[-1]
    need = train_months + val_months + test_months
    if last - first + 1 < need:
        raise ValueError(f"need at least {need} calendar months of data")

    def day(m):
        return int(np.searchsorted(months, m, side="left"))

    out = []
    m0 = first
    while m0 + need - 1 <= last:
        a, b = day(m0), day(m0 + train_months)
        c, e = day(m0 + train_months + val_months), day(m0 + need)
        out.append(Window(len(out), (a, b), (b, c), (c, e)))
        m0 += test_months
    return out


# metrics ------------------------------------------------------------------

def _spearman(pred, truth):
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    if pred.shape != truth.shape or pred.ndim != 1 or len(pred) < 2:
        raise ValueError("ic needs two equal-length vectors of length >= 2")
    rp, rt = rankdata(pred), rankdata(truth)
    rp, rt = rp - rp.mean(), rt - rt.mean()
    den = math.sqrt((rp * rp).sum() * (rt * rt).sum())
    if den == 0:
        return 0.0, False
    return float((rp * rt).sum() / den), True


def ic(pred, truth):
    """Spearman rank correlation (average ranks on ties); 0 for a constant input."""
    return _spearman(pred, truth)[0]


def daily_ic(preds, truths):
    """Per-day IC rows of (days x N) arrays, and the count of undefined days."""
    vals, bad = [], 0
    for p, t in zip(preds, truths):
        v, ok = _spearman(p, t)
        vals.append(v)
        bad += not ok
    return np.array(vals), bad


def top_k_count(n, k_frac):
    if not 0.0 < k_frac <= 1.0:
        raise ValueError(f"k_frac must lie in (0, 1], got {k_frac}")
    # guard against 0.3 * 10 == 3.0000000000000004
    return max(1, math.ceil(k_frac * n - 1e-9))


def top_k_indices(pred, k_frac):
    """Indices of the K highest predictions; ties go to the lower stock index."""
    pred = np.asarray(pred, float)
    return np.argsort(-pred, kind="stable")[:top_k_count(len(pred), k_frac)]


def topk_portfolio_returns(preds, realized, k_frac=0.3):
    preds, realized = np.atleast_2d(preds), np.atleast_2d(realized)
    return np.array([r[top_k_indices(p, k_frac)].mean() for p, r in zip(preds, realized)])


def ir(daily_returns):
    """Mean over sample std (ddof=1) of daily returns, not annualized."""
    return _ir(daily_returns)[0]


def _ir(daily_returns):
    r = np.asarray(daily_returns, float)
    if len(r) < 2:
        raise ValueError("ir needs at least 2 days")
    sd = r.std(ddof=1)
    # a constant series can leave float dust in the std
    if sd == 0 or (r == r[0]).all():
        return 0.0, False
    return float(r.mean() / sd), True


def cr(daily_returns):
    r = np.asarray(daily_returns, float)
    if len(r) < 1:
        raise ValueError("cr needs at least 1 day")
    return float(np.prod(1.0 + r) - 1.0)


def precision_at_k(preds, realized, k_frac=0.3):
    preds, realized = np.atleast_2d(preds), np.atleast_2d(realized)
    return float(np.mean([(r[top_k_indices(p, k_frac)] > 0).mean()
                          for p, r in zip(preds, realized)]))


@dataclass
class MetricRow:
    window: int
    ic: float
    ir: float
    cr: float
    precision_at_k: float
    n_days: int = 0
    flags: list = field(default_factory=list)


def metric_row(window_id, preds, realized, k_frac=0.3):
    """All four metrics for one test window of (days x N) arrays."""
    preds, realized = np.asarray(preds, float), np.asarray(realized, float)
    flags = []
    ics, bad = daily_ic(preds, realized)
    if bad:
        flags.append(f"ic_undefined_days={bad}")
    port = topk_portfolio_returns(preds, realized, k_frac)
    ir_val, ok = _ir(port) if len(port) >= 2 else (0.0, False)
    if not ok:
        flags.append("ir_zero_variance")
    return MetricRow(window_id, float(ics.mean()), ir_val, cr(port),
                     precision_at_k(preds, realized, k_frac), len(preds), flags)


# report -------------------------------------------------------------------

@dataclass
class BacktestReport:
    rows: list
    label: str = ""
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def aggregate(self):
        return {m: float(np.mean([getattr(r, m) for r in self.rows])) for m in METRICS}

    def to_dict(self):
        return {"label": self.label, "config_hash": self.config_hash,
                "aggregate": self.aggregate, "rows": [asdict(r) for r in self.rows],
                "extra": self.extra}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config_hash", "label", "window", *METRICS, "n_days", "flags"])
        for r in self.rows:
            w.writerow([self.config_hash, self.label, r.window,
                        *(repr(getattr(r, m)) for m in METRICS), r.n_days, ";".join(r.flags)])
        agg = self.aggregate
        w.writerow([self.config_hash, self.label, "mean", *(repr(agg[m]) for m in METRICS), "", ""])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d):
        return cls([MetricRow(**r) for r in d["rows"]], d.get("label", ""),
                   d.get("config_hash", ""), d.get("extra", {}))


def relative_table(baseline: BacktestReport, candidate: BacktestReport):
    """Absolute and relative deltas of ``candidate`` over ``baseline`` per metric."""
    a, b = baseline.aggregate, candidate.aggregate
    out = {}
    for m in METRICS:
        delta = b[m] - a[m]
        out[m] = {baseline.label or "baseline": a[m], candidate.label or "candidate": b[m],
                  "abs_delta": delta,
                  "rel_delta": delta / abs(a[m]) if a[m] != 0 else None}
    return out


def bar_chart_svg(reports, width=640, height=320):
    """Grouped bar chart, one group per metric, one bar per report."""
    colors = ("#4c72b0", "#dd8452", "#55a868", "#c44e52")
    groups = len(METRICS)
    vals = np.array([[r.aggregate[m] for m in METRICS] for r in reports])
    top = max(float(np.abs(vals).max()), 1e-12)
    pad, base = 40, height / 2
    gw = (width - 2 * pad) / groups
    bw = gw / (len(reports) + 1)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<line x1="{pad}" y1="{base}" x2="{width - pad}" y2="{base}" stroke="black"/>']
    for g, m in enumerate(METRICS):
        x0 = pad + g * gw
        parts.append(f'<text x="{x0 + gw / 2:.1f}" y="{height - 8}" text-anchor="middle" '
                     f'font-size="12">{m}</text>')
        for k, rep in enumerate(reports):
            v = vals[k, g]
            h = abs(v) / top * (base - pad)
            y = base - h if v >= 0 else base
            parts.append(f'<rect x="{x0 + (k + 0.5) * bw:.1f}" y="{y:.1f}" width="{bw:.1f}" '
                         f'height="{h:.1f}" fill="{colors[k % len(colors)]}">'
                         f'<title>{rep.label} {m}={v:.4f}</title></rect>')
    for k, rep in enumerate(reports):
        parts.append(f'<text x="{pad + 4}" y="{14 + 14 * k}" font-size="11" '
                     f'fill="{colors[k % len(colors)]}">{rep.label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# running ------------------------------------------------------------------

@dataclass
class WindowData:
    """Graph batch and targets for a window span, plus end positions per segment."""

    batch: gat.GraphBatch
    targets: np.ndarray
    train_ends: np.ndarray
    val_ends: np.ndarray
    test_ends: np.ndarray
    offset: int
    n_features: int
    n_industry_features: int


def prepare_window(series: MarketSeries, win: Window, hp, metapaths, variance_target=0.95):
    T = hp.window
    lo = max(0, win.train[0] - (T - 1))
    hi = win.test[1]
    prep = preprocess_window(series, win.train, (lo, hi), variance_target)
    batch = gat.stack_snapshots(prep.snapshots(series), metapaths)
    y_all = mdl.excess_return_target(series.prices, series.index_level)
    targets = np.zeros((hi - lo, series.n_stocks))
    # the last day of the series has no next-day return
    days = np.arange(lo, hi)
    has_next = days < series.n_days - 1
    targets[has_next] = y_all[days[has_next]]

    def ends(a, b, strict):
        # a training/validation target must not read the first price of the next segment
        days = np.arange(max(a, lo + T - 1), b - 1 if strict else b)
        days = days[days < series.n_days - 1]
        return days - lo

    return WindowData(batch, targets, ends(*win.train, True), ends(*win.val, True),
                      ends(*win.test, False), lo, prep.stock_features.shape[2],
                      prep.industry_features.shape[2])


def fit_window(series, win, hp, cfg, variance_target=0.95, train=True, params=None):
    """Preprocess one window and (optionally) train on it.

    Returns ``(WindowData, params, TrainResult or None, scale)``. Training runs
    on targets divided by ``scale``, the training-slice target std, so the
    optimizer sees unit-sized errors; rankings are unaffected. ``params``
    supplies fixed weights (for example from a checkpoint); they are used
    as-is when ``train`` is false and as the starting point otherwise.
    """
    data = prepare_window(series, win, hp, cfg.metapaths, variance_target)
    seed = cfg.seed * 1_000_003 + win.id
    fresh = mdl.init_params(hp, series.n_stocks, data.n_features, data.n_industry_features,
                            cfg.metapaths, seed=seed)
    if params is None:
        params = fresh
    else:
        bad = sorted(k for k in fresh if k not in params or params[k].shape != fresh[k].shape)
        if bad:
            raise ValueError(f"window {win.id}: supplied parameters do not fit this window "
                             f"({len(bad)} mismatched tensors, first {bad[0]!r})")
    scale = float(data.targets[data.train_ends].std()) if len(data.train_ends) else 1.0
    scale = scale if scale > 0 else 1.0
    result = None
    if train:
        result = mdl.train(params, data.batch, data.targets / scale, data.train_ends,
                           data.val_ends, hp, replace(cfg, seed=seed))
        params = result.params
    return data, params, result, scale


def run_window(series, win, hp, cfg, k_frac=0.3, variance_target=0.95, train=True,
               params=None):
    """Fit on the window's training slice and score its test slice."""
    data, params, result, scale = fit_window(series, win, hp, cfg, variance_target, train,
                                             params)
    preds = scale * mdl.predict(params, data.batch, data.test_ends, hp, cfg.metapaths)
    realized = data.targets[data.test_ends]
    row = metric_row(win.id, preds, realized, k_frac)
    info = {"window": win.id, "test_days": (data.test_ends + data.offset).tolist(),
            "predictions": preds.tolist(), "realized": realized.tolist()}
    if result is not None:
        info.update(best_epoch=result.best_epoch, epochs_run=result.epochs_run,
                    best_val_loss=result.best_val_loss)
    return row, info


def _run_window_job(args):
    try:
        return run_window(*args)
    except Exception as exc:
        raise RuntimeError(f"backtest window {args[1].id} failed: {exc}") from exc


def run_backtest(series, hp, cfg, windows, k_frac=0.3, variance_target=0.95, train=True,
                 jobs=1, label="", params=None):
    """Evaluate every window; returns ``(BacktestReport, per-window details)``."""
    jobs_args = [(series, w, hp, cfg, k_frac, variance_target, train, params) for w in windows]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_run_window_job, jobs_args))
    else:
        results = [_run_window_job(a) for a in jobs_args]
    results.sort(key=lambda r: r[0].window)
    chash = mdl.config_hash({"hp": hp, "cfg": cfg, "k_frac": k_frac,
                             "variance_target": variance_target, "train": train,
                             "windows": [asdict(w) for w in windows]})
    report = BacktestReport([r for r, _ in results], label, chash)
    return report, [info for _, info in results]


def report_from_predictions(details, k_frac=0.3, label="", config_hash=""):
    """Recompute metric rows from saved per-window predictions."""
    rows = [metric_row(d["window"], np.array(d["predictions"]), np.array(d["realized"]), k_frac)
            for d in details]
    return BacktestReport(rows, label, config_hash)


def run_ablation(series, hp, cfg, windows, drop="SIS", **kw):
    """Paired full vs. ablated backtests and their delta table."""
    full_cfg = cfg
    abl_cfg = mdl.ablate(cfg, drop)
    full, _ = run_backtest(series, hp, full_cfg, windows,
                           label="+".join(p.value for p in full_cfg.metapaths), **kw)
    abl, _ = run_backtest(series, hp, abl_cfg, windows,
                          label="+".join(p.value for p in abl_cfg.metapaths), **kw)
    return abl, full, relative_table(abl, full)
