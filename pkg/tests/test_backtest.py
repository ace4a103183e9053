import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from omnignn import backtest as bt
from omnignn import model as mdl
from omnignn.synthdata import UniverseSpec, generate
from oracles import spearman


def enumerate_windows(n_days, tr, va, te):
    """Arithmetic oracle: every start s = k * te with s + span <= n_days."""
    out, k = [], 0
    while k * te + tr + va + te <= n_days:
        s = k * te
        out.append(((s, s + tr), (s + tr, s + tr + va), (s + tr + va, s + tr + va + te)))
        k += 1
    return out


def test_schedule_examples():
    one = bt.schedule(210)
    assert len(one) == 1 and one[0].test == (168, 210)
    two = bt.schedule(252 + 42, 126, 42, 42)
    assert [(w.train, w.val, w.test) for w in two] == enumerate_windows(294, 126, 42, 42)
    assert two[1].train[0] - two[0].train[0] == 42
    with pytest.raises(ValueError, match="210"):
        bt.schedule(209)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 400), st.integers(1, 60), st.integers(1, 30), st.integers(1, 30))
def test_schedule_properties(n, tr, va, te):
    if n < tr + va + te:
        with pytest.raises(ValueError):
            bt.schedule(n, tr, va, te)
        return
    wins = bt.schedule(n, tr, va, te)
    assert [(w.train, w.val, w.test) for w in wins] == enumerate_windows(n, tr, va, te)
    for w in wins:
        assert w.train[1] == w.val[0] and w.val[1] == w.test[0] and w.test[1] <= n


def test_schedule_calendar():
    import datetime as dt
    days = [dt.date(2020, 1, 1) + dt.timedelta(d) for d in range(0, 400, 1)]
    wins = bt.schedule_calendar(days, 6, 2, 2)
    assert days[wins[0].val[0]] == dt.date(2020, 7, 1)
    assert days[wins[1].train[0]] == dt.date(2020, 3, 1)


def test_ic_examples():
    assert bt.ic([1, 2, 3], [4, 5, 6]) == pytest.approx(1.0, abs=1e-15)
    assert bt.ic([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)
    assert bt.ic([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)
    vals, bad = bt.daily_ic(np.ones((2, 4)), np.arange(8.0).reshape(2, 4))
    assert bad == 2 and (vals == 0).all()
    with pytest.raises(ValueError):
        bt.ic([1.0], [1.0])


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(2, 12), elements=st.integers(-5, 5).map(float)),
       st.integers(0, 2**32 - 1))
def test_ic_properties(pred, seed):
    truth = np.random.default_rng(seed).normal(size=len(pred))
    v = bt.ic(pred, truth)
    assert -1 - 1e-12 <= v <= 1 + 1e-12
    assert v == pytest.approx(spearman(pred, truth), abs=1e-12)
    assert bt.ic(np.exp(pred) * 3 + 1, truth) == pytest.approx(v, abs=1e-12)


def test_topk_examples(rng):
    assert bt.top_k_count(10, 0.3) == 3
    np.testing.assert_array_equal(bt.top_k_indices(np.zeros(10), 0.3), [0, 1, 2])
    p, r = rng.normal(size=(5, 10)), rng.normal(size=(5, 10))
    ref = []
    for d in range(5):
        top = sorted(range(10), key=lambda i: (-p[d, i], i))[:3]
        ref.append(sum(r[d, i] for i in top) / 3)
    np.testing.assert_allclose(bt.topk_portfolio_returns(p, r, 0.3), ref, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (3, 7), elements=st.floats(-10, 10)), st.floats(-100, 100))
def test_topk_shift_invariant(p, c):
    for day in p:
        # a shift can merge near-equal floats, so compare on exactly representable shifts
        shifted = day + np.round(c)
        if len(set(shifted)) == len(set(day)):
            np.testing.assert_array_equal(bt.top_k_indices(day, 0.3),
                                          bt.top_k_indices(shifted, 0.3))


def test_ir_examples(rng):
    assert bt._ir([0.01] * 5) == (0.0, False)
    assert bt.ir([0.01, -0.01]) == 0.0
    x = rng.normal(size=30)
    m = sum(x) / len(x)
    sd = math.sqrt(sum((v - m) ** 2 for v in x) / (len(x) - 1))
    assert bt.ir(x) == pytest.approx(m / sd, abs=1e-12)


def test_cr_examples(rng):
    assert bt.cr([0.02]) == pytest.approx(0.02, abs=1e-15)
    assert bt.cr([0.1, -0.1]) == pytest.approx(-0.01, abs=1e-15)
    assert bt.cr(np.zeros(9)) == 0.0
    x = rng.normal(0, 0.01, 42)
    prod = 1.0
    for v in x:
        prod *= 1 + v
    assert bt.cr(x) == pytest.approx(prod - 1, abs=1e-12)
    assert bt.cr([0.03]) == bt.cr(np.array([0.03]))


def test_precision_examples(rng):
    p = rng.normal(size=(4, 10))
    assert bt.precision_at_k(p, np.ones((4, 10))) == 1.0
    assert bt.precision_at_k(p, -np.ones((4, 10))) == 0.0
    r = rng.normal(size=(4, 10))
    hits = 0
    for d in range(4):
        top = sorted(range(10), key=lambda i: (-p[d, i], i))[:3]
        hits += sum(r[d, i] > 0 for i in top)
    assert bt.precision_at_k(p, r) == pytest.approx(hits / 12, abs=1e-15)


def test_metric_row_flags():
    row = bt.metric_row(0, np.ones((3, 4)), np.tile([0.01, 0.0, 0.0, 0.0], (3, 1)))
    assert "ic_undefined_days=3" in row.flags and "ir_zero_variance" in row.flags
    assert 0 <= row.precision_at_k <= 1


def test_report_roundtrip():
    rows = [bt.MetricRow(0, 0.1, 0.2, 0.3, 0.5, 42), bt.MetricRow(1, 0.3, 0.0, -0.1, 0.7, 42)]
    rep = bt.BacktestReport(rows, "SS", "abc")
    assert rep.aggregate["ic"] == pytest.approx(0.2)
    back = bt.BacktestReport.from_dict(json.loads(rep.to_json()))
    assert back.to_json() == rep.to_json()
    assert rep.to_csv().splitlines()[-1].startswith("abc,SS,mean,")
    table = bt.relative_table(bt.BacktestReport(rows[:1], "SS"),
                              bt.BacktestReport(rows[1:], "SIS"))
    assert table["ic"]["abs_delta"] == pytest.approx(0.2)
    assert table["ic"]["rel_delta"] == pytest.approx(2.0)
    assert table["ir"]["rel_delta"] == pytest.approx(-1.0)
    flipped = bt.relative_table(bt.BacktestReport(rows[1:], "SIS"), bt.BacktestReport(rows[:1]))
    assert flipped["ir"]["rel_delta"] is None
    svg = bt.bar_chart_svg([rep])
    assert svg.startswith("<svg") and svg.count("<rect") == 4


TINY = mdl.Hyperparams(d_h=4, gat_heads=1, gat_layers=1, n_heads=1, n_layers=1, d_ff=4, window=2)


@pytest.fixture(scope="module")
def small_series():
    return generate(UniverseSpec(n_stocks=4, n_days=252, seed=5))


def test_run_backtest_single_window(small_series):
    cfg = mdl.TrainConfig(max_epochs=2, patience=1, seed=1)
    wins = bt.schedule(small_series.n_days)[:1]
    rep, det = bt.run_backtest(small_series, TINY, cfg, wins)
    assert len(rep.rows) == 1
    assert rep.aggregate == {m: getattr(rep.rows[0], m) for m in bt.METRICS}
    again, _ = bt.run_backtest(small_series, TINY, cfg, wins)
    assert again.to_json() == rep.to_json()
    redo = bt.report_from_predictions(det, 0.3, rep.label, rep.config_hash)
    assert redo.rows == rep.rows


def test_ablation_pair(small_series):
    cfg = mdl.TrainConfig(max_epochs=1, patience=1)
    abl, full, table = bt.run_ablation(small_series, TINY, cfg, bt.schedule(252)[:1])
    assert (abl.label, full.label) == ("SS", "SS+SIS")
    assert set(table) == set(bt.METRICS)


def test_target_days_respect_segments(small_series):
    win = bt.schedule(small_series.n_days)[0]
    data = bt.prepare_window(small_series, win, TINY, mdl.ALL_PATHS)
    # a target at day t reads price t + 1, which must stay inside t's segment
    train, val, test = (e + data.offset for e in (data.train_ends, data.val_ends, data.test_ends))
    assert train.max() + 1 < win.train[1]
    assert val.min() >= win.val[0] and val.max() + 1 < win.val[1]
    assert test.min() == win.test[0] and test.max() == win.test[1] - 1


def test_leakage_probe(small_series):
    """Rewriting every test-slice input leaves the fitted parameters unchanged."""
    s = small_series
    win = bt.schedule(s.n_days)[0]
    cfg = mdl.TrainConfig(max_epochs=2, patience=5, seed=3)
    a, b = win.test
    noise = np.random.default_rng(1)
    prices = s.prices.copy()
    prices[a:b] *= np.exp(noise.normal(0, 0.2, prices[a:b].shape))
    feats = s.raw_features.copy()
    feats[a:b] = noise.normal(0, 5, feats[a:b].shape)
    ind = s.industry_features.copy()
    ind[a:b] = noise.normal(0, 5, ind[a:b].shape)
    esg = s.esg.copy()
    esg[a:b] = 100.0
    poked = type(s)(prices, s.index_level, feats, ind, s.holders, s.revenues, esg, s.gics,
                    s.tickers, s.dates)
    _, p1, _, _ = bt.fit_window(s, win, TINY, cfg)
    _, p2, _, _ = bt.fit_window(poked, win, TINY, cfg)
    for k in p1:
        assert p1[k].data.tobytes() == p2[k].data.tobytes(), k


def test_parallel_jobs_match_serial(small_series):
    cfg = mdl.TrainConfig(max_epochs=2, patience=1, seed=2)
    wins = bt.schedule(small_series.n_days)
    serial, _ = bt.run_backtest(small_series, TINY, cfg, wins)
    parallel, _ = bt.run_backtest(small_series, TINY, cfg, wins, jobs=2)
    assert len(wins) == 2 and parallel.to_json() == serial.to_json()
