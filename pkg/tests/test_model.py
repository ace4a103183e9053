import numpy as np
import pytest

from omnignn import backtest as bt
from omnignn import gat
from omnignn import model as mdl
from omnignn.market_graph import Metapath
from omnignn.numerics import Tape, Tensor, backward
from omnignn.synthdata import UniverseSpec, generate
from builders import gradcheck, hyper, random_snapshots

SS = (Metapath.SS,)


def test_excess_return_examples(rng):
    y = mdl.excess_return_target([[100.0], [110.0]], [100.0, 102.0], 0)
    assert y[0] == pytest.approx(0.08, abs=1e-15)
    assert mdl.excess_return_target([[50.0], [55.0]], [10.0, 11.0], 0)[0] == 0.0
    p = rng.uniform(10, 20, (6, 3))
    s = rng.uniform(100, 200, 6)
    ref = [[(p[t + 1, i] - p[t, i]) / p[t, i] - (s[t + 1] - s[t]) / s[t] for i in range(3)]
           for t in range(5)]
    np.testing.assert_allclose(mdl.excess_return_target(p, s), ref, atol=1e-15)
    with pytest.raises(ValueError):
        mdl.excess_return_target([[1.0], [0.0]], [1.0, 1.0])
    with pytest.raises(IndexError):
        mdl.excess_return_target(p, s, 5)


def test_loss_examples(rng):
    y = rng.normal(size=(4, 3))
    assert mdl.loss(Tensor(y), y).item() == 0.0
    assert mdl.loss(Tensor(y + 0.5), y).item() == pytest.approx(0.25, abs=1e-15)
    a = rng.normal(size=(4, 3))
    ref = sum((a[i, j] - y[i, j]) ** 2 for i in range(4) for j in range(3)) / 12
    assert mdl.loss(Tensor(a), y).item() == pytest.approx(ref, abs=1e-14)


def test_ablate_examples():
    cfg = mdl.TrainConfig()
    assert mdl.ablate(cfg, "SIS").metapaths == SS
    assert mdl.ablate(cfg) is cfg
    with pytest.raises(ValueError):
        mdl.ablate(mdl.ablate(cfg, "SS"), "SIS")


def test_config_validation():
    assert mdl.TrainConfig(patience=0).validate()
    assert mdl.Hyperparams(d_h=6, n_heads=4).validate()
    assert mdl.Hyperparams().validate() == []


@pytest.mark.parametrize("paths", [mdl.ALL_PATHS, SS])
def test_param_count_closed_form(paths):
    hp = mdl.Hyperparams()
    params = mdl.init_params(hp, 10, 8, 4, paths)
    assert mdl.param_count(params) == mdl.expected_param_count(hp, 10, 8, 4, paths)


def setup(seed=0, n=5, days=6, paths=mdl.ALL_PATHS, **kw):
    rng = np.random.default_rng(seed)
    hp = hyper(**kw)
    batch = gat.stack_snapshots(random_snapshots(rng, n, days), paths)
    params = mdl.init_params(hp, n, 3, 2, paths, seed=seed)
    return hp, batch, params


def test_forward_zero_weights_gives_bias():
    hp, batch, params = setup()
    zero = {k: Tensor(np.zeros(v.shape)) for k, v in params.items()}
    zero["head.b"] = Tensor(np.arange(5.0))
    out = mdl.forward(zero, batch, [3, 5], hp, mdl.ALL_PATHS).data
    np.testing.assert_array_equal(out, np.tile(np.arange(5.0), (2, 1)))


def test_forward_permutation_with_heads():
    perm = np.array([2, 4, 0, 1, 3])
    hp = hyper()
    base = gat.stack_snapshots(random_snapshots(np.random.default_rng(3), 5, 4))
    moved = gat.stack_snapshots(random_snapshots(np.random.default_rng(3), 5, 4, perm=perm))
    params = mdl.init_params(hp, 5, 3, 2, seed=3)
    swapped = dict(params)
    swapped["head.W"] = Tensor(params["head.W"].data[perm])
    swapped["head.b"] = Tensor(params["head.b"].data[perm] + 0.0)
    a = mdl.forward(params, base, [3], hp, mdl.ALL_PATHS).data
    b = mdl.forward(swapped, moved, [3], hp, mdl.ALL_PATHS).data
    np.testing.assert_allclose(b, a[:, perm], atol=1e-12)


def test_forward_deterministic_and_window_contract():
    hp, batch, params = setup()
    a = mdl.forward(params, batch, [3, 4, 5], hp, mdl.ALL_PATHS).data
    assert a.tobytes() == mdl.forward(params, batch, [3, 4, 5], hp, mdl.ALL_PATHS).data.tobytes()
    np.testing.assert_array_equal(mdl.predict(params, batch, [3, 4, 5], hp, mdl.ALL_PATHS, 2), a)
    with pytest.raises(IndexError):
        mdl.forward(params, batch, [2], hp, mdl.ALL_PATHS)


def test_predict_window_matches_forward():
    rng = np.random.default_rng(4)
    hp = hyper()
    snaps = random_snapshots(rng, 5, 4)
    params = mdl.init_params(hp, 5, 3, 2, seed=4)
    ref = mdl.forward(params, gat.stack_snapshots(snaps), [3], hp, mdl.ALL_PATHS).data[0]
    np.testing.assert_array_equal(mdl.predict_window(params, snaps, hp), ref)


def test_full_model_gradient():
    hp, batch, params = setup(seed=5)
    y = np.random.default_rng(0).normal(size=(3, 5))
    fn = lambda p: mdl.loss(mdl.forward(p, batch, [3, 4, 5], hp, mdl.ALL_PATHS), y)  # noqa: E731
    assert gradcheck(fn, params, 0) < 1e-4


def test_gradient_flow_and_ss_ablation():
    hp, batch, params = setup(seed=6)
    y = np.random.default_rng(1).normal(size=(3, 5))
    cfg = mdl.TrainConfig()
    _, _, _, grads = mdl.train_step(params, mdl.AdamState.zeros_like(params), batch,
                                    np.array([3, 4, 5]), y, hp, cfg, None)
    dead = [k for k, g in grads.items() if not np.abs(g).sum() > 0]
    assert dead == []
    # with SS only, industry inputs have no parameters and no effect
    _, _, params_ss = setup(seed=6, paths=SS)
    assert not any(".SIS." in k or k.startswith("sem.") for k in params_ss)
    poked = gat.GraphBatch(batch.x, batch.xi * 3 + 1, batch.views)
    a = mdl.forward(params_ss, batch, [3, 4, 5], hp, SS).data
    b = mdl.forward(params_ss, poked, [3, 4, 5], hp, SS).data
    assert a.tobytes() == b.tobytes()


def test_industry_gradients_zero_under_ss():
    hp, batch, params = setup(seed=8)
    xi = Tensor(batch.xi, requires_grad=True)
    y = np.random.default_rng(2).normal(size=(2, 5))
    with Tape() as tape:
        b2 = gat.GraphBatch(batch.x, xi, batch.views)
        residual = mdl.forward(params, b2, [4, 5], hp, SS) * 1.0
        value = mdl.loss(residual, y)
    (g,) = backward(value, tape, [xi])
    assert (g == 0).all()


def test_lr_zero_keeps_params():
    hp, batch, params = setup(seed=9)
    y = np.random.default_rng(0).normal(size=(6, 5))
    cfg = mdl.TrainConfig(lr=0.0, max_epochs=3, patience=5, batch_size=2)
    res = mdl.train(params, batch, y, np.array([3, 4]), np.array([5]), hp, cfg)
    for k in params:
        assert res.params[k].data.tobytes() == params[k].data.tobytes()


def test_smoke_training_reduces_loss():
    s = generate(UniverseSpec(n_stocks=5, n_days=260, factor_strength=0.9, seed=2))
    hp = hyper(d_h=8, gat_layers=2, window=2)
    cfg = mdl.TrainConfig(seed=0)
    win = bt.schedule(s.n_days)[0]
    data = bt.prepare_window(s, win, hp, cfg.metapaths)
    params = mdl.init_params(hp, 5, data.n_features, data.n_industry_features, seed=0)
    y = data.targets / data.targets[data.train_ends].std()
    state = mdl.AdamState.zeros_like(params)
    rng = np.random.default_rng(0)
    ends = data.train_ends

    def full_loss(p):
        return float(np.mean((mdl.predict(p, data.batch, ends, hp, cfg.metapaths) - y[ends]) ** 2))

    start = full_loss(params)
    for step in range(200):
        pick = rng.choice(ends, 16, replace=False)
        params, state, _, _ = mdl.train_step(params, state, data.batch, pick, y[pick], hp, cfg,
                                             rng)
    assert full_loss(params) < start


def test_early_stopping_contract():
    stop = mdl.EarlyStopping(1)
    assert not stop.update(1.0, 0, "a")
    assert stop.update(2.0, 1, "b")
    assert (stop.best, stop.best_epoch, stop.best_state) == (1.0, 0, "a")
    with pytest.raises(ValueError):
        mdl.EarlyStopping(0)


def test_train_restores_best_validation():
    hp, batch, params = setup(seed=10, days=12)
    y = np.random.default_rng(3).normal(size=(12, 5))
    cfg = mdl.TrainConfig(lr=0.01, max_epochs=12, patience=4, batch_size=4)
    res = mdl.train(params, batch, y, np.arange(3, 9), np.arange(9, 12), hp, cfg)
    vals = [h["val_loss"] for h in res.history]
    assert res.best_val_loss == min(vals)
    assert res.best_epoch == int(np.argmin(vals))
    refit = np.mean((mdl.predict(res.params, batch, np.arange(9, 12), hp, mdl.ALL_PATHS)
                     - y[9:12]) ** 2)
    assert refit == pytest.approx(res.best_val_loss, rel=1e-12)


def test_checkpoint_roundtrip(tmp_path):
    hp, batch, params = setup(seed=11)
    state = mdl.AdamState.zeros_like(params)
    y = np.random.default_rng(0).normal(size=(2, 5))
    params, state, _, _ = mdl.train_step(params, state, batch, np.array([3, 4]), y, hp,
                                         mdl.TrainConfig(), None)
    path = tmp_path / "ck.npz"
    mdl.save_checkpoint(path, params, state, 7, {"hp": hp}, chash="abc", extra={"window": 2})
    p2, s2, meta = mdl.load_checkpoint(path)
    assert meta["epoch"] == 7 and meta["config_hash"] == "abc" and meta["window"] == 2
    assert s2.step == state.step
    for k in params:
        assert p2[k].data.tobytes() == params[k].data.tobytes()
        assert s2.m[k].tobytes() == state.m[k].tobytes()
