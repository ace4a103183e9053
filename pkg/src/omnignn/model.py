"""Full structural -> temporal -> per-stock head model and its training loop."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import gat, temporal
from . import numerics as nx
from .market_graph import Metapath
from .numerics import AdamConfig, AdamState, Tape, Tensor

log = logging.getLogger(__name__)

ALL_PATHS = (Metapath.SS, Metapath.SIS)


@dataclass(frozen=True)
class Hyperparams:
    d_h: int = 64
    gat_heads: int = 4
    gat_layers: int = 3
    slope: float = 0.2
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    dropout: float = 0.1
    window: int = 20

    def validate(self):
        errors = []
        if self.d_h % self.n_heads:
            errors.append(f"d_h={self.d_h} must be divisible by n_heads={self.n_heads}")
        for name in ("d_h", "gat_heads", "gat_layers", "n_heads", "n_layers", "d_ff", "window"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1")
        if not 0.0 < self.slope < 1.0:
            errors.append("slope must lie in (0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            errors.append("dropout must lie in [0, 1)")
        return errors


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 600
    patience: int = 50
    metapaths: tuple = ALL_PATHS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "metapaths", tuple(Metapath(p) for p in self.metapaths))
        object.__setattr__(self, "betas", tuple(self.betas))

    def validate(self):
        errors = []
        if self.patience < 1:
            errors.append("patience must be >= 1")
        if not self.metapaths:
            errors.append("at least one metapath must be enabled")
        if self.batch_size < 1:
            errors.append("batch_size must be >= 1")
        if self.max_epochs < 0:
            errors.append("max_epochs must be >= 0")
        if self.lr < 0 or self.weight_decay < 0:
            errors.append("lr and weight_decay must be >= 0")
        return errors

    @property
    def adam(self):
        return AdamConfig(self.lr, self.betas[0], self.betas[1], self.eps, self.weight_decay)


def ablate(config: TrainConfig, drop=None) -> TrainConfig:
    """Return ``config`` with metapath ``drop`` disabled (``None`` is a no-op)."""
    if drop is None:
        return config
    drop = Metapath(drop)
    remaining = tuple(p for p in config.metapaths if p is not drop)
    if not remaining:
        raise ValueError(f"dropping {drop.value} leaves no metapath enabled")
    return replace(config, metapaths=remaining)


def config_hash(obj) -> str:
    blob = json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Metapath):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# targets and loss -------------------------------------------------------------

def excess_return_target(prices, index_level, t=None):
    """Next-day stock return minus next-day index return.

    With ``t`` given returns the N-vector for day ``t``; otherwise a
    (days - 1) x N array for every day that has a successor.
    """
    p = np.asarray(prices, dtype=float)
    s = np.asarray(index_level, dtype=float)
    if (p <= 0).any() or (s <= 0).any():
        raise ValueError("prices and index levels must be positive")
    if t is None:
        return (p[1:] - p[:-1]) / p[:-1] - ((s[1:] - s[:-1]) / s[:-1])[:, None]
    if not 0 <= t < len(p) - 1:
        raise IndexError(f"day {t} has no successor in a series of {len(p)} days")
    return (p[t + 1] - p[t]) / p[t] - (s[t + 1] - s[t]) / s[t]


def loss(predictions, targets):
    return nx.mse(predictions, targets)


# parameters -------------------------------------------------------------------

def init_params(hp: Hyperparams, n_stocks, n_features, n_industry_features,
                metapaths=ALL_PATHS, seed=0):
    rng = np.random.default_rng(seed)
    params = gat.init_params(rng, hp, n_features, n_industry_features, metapaths)
    params.update(temporal.init_params(rng, hp))
    lim = np.sqrt(6.0 / (hp.d_h + 1))
    params["head.W"] = Tensor(rng.uniform(-lim, lim, (n_stocks, hp.d_h)), requires_grad=True)
    params["head.b"] = Tensor(np.zeros(n_stocks), requires_grad=True)
    return params


def expected_param_count(hp: Hyperparams, n_stocks, n_features, n_industry_features,
                         metapaths=ALL_PATHS):
    d, H = hp.d_h, hp.gat_heads
    metapaths = [Metapath(p) for p in metapaths]
    total = 0
    for layer in range(hp.gat_layers):
        f_in = n_features if layer == 0 else d
        fi_in = n_industry_features if layer == 0 else d
        for p in metapaths:
            total += H * d * f_in + H * d * 2 + H * 3 * d + d
            if p is Metapath.SIS:
                total += H * d * fi_in
        if len(metapaths) > 1:
            total += d + len(metapaths) * d * d
    block = 4 * d * d + d + hp.d_ff * d + hp.d_ff + d * hp.d_ff + d + 4 * d
    total += hp.n_layers * block + 2 * d
    return total + n_stocks * d + n_stocks


def param_count(params):
    return int(sum(p.size for p in params.values()))


# forward ----------------------------------------------------------------------

def forward(params, batch: gat.GraphBatch, ends, hp: Hyperparams, metapaths, rng=None):
    """Predict next-day excess returns for windows ending at day positions ``ends``.

    Each window covers positions ``end - window + 1 .. end`` of ``batch``.
    Only the distinct days touched by the windows go through the structural
    layer. Returns a (len(ends), N) tensor.
    """
    ends = np.asarray(ends, dtype=int)
    T = hp.window
    if (ends < T - 1).any() or (ends >= batch.n_days).any():
        raise IndexError(f"window end positions must lie in [{T - 1}, {batch.n_days})")
    days = ends[:, None] - (T - 1) + np.arange(T)[None, :]
    uniq, pos = np.unique(days, return_inverse=True)
    emb = gat.structural_forward(params, batch.subset(uniq), hp, metapaths)
    B, N = len(ends), batch.n_stocks
    seq = emb[pos.reshape(B, T)]  # (B, T, N, d)
    seq = nx.transpose(seq, (0, 2, 1, 3)).reshape(B * N, T, hp.d_h)
    z = temporal.transformer_encode(seq, params, hp, rng).reshape(B, N, hp.d_h)
    return (z * params["head.W"]).sum(axis=-1) + params["head.b"]


def predict_window(params, snapshots, hp, metapaths=ALL_PATHS):
    """Eval-mode predictions for the day after the last of ``snapshots``."""
    if len(snapshots) != hp.window:
        raise ValueError(f"expected {hp.window} snapshots, got {len(snapshots)}")
    batch = gat.stack_snapshots(snapshots, metapaths)
    return forward(params, batch, [hp.window - 1], hp, metapaths).data[0]


def predict(params, batch, ends, hp, metapaths, chunk=64):
    ends = np.asarray(ends, dtype=int)
    out = [forward(params, batch, ends[i:i + chunk], hp, metapaths).data
           for i in range(0, len(ends), chunk)]
    return np.concatenate(out) if out else np.zeros((0, batch.n_stocks))


# training ---------------------------------------------------------------------

class DivergenceError(RuntimeError):
    pass


class EarlyStopping:
    """Track the best validation loss; signal a stop after ``patience`` misses."""

    def __init__(self, patience):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.best_state = None
        self.misses = 0
        self.evaluations = 0

    def update(self, val_loss, epoch, state=None):
        self.evaluations += 1
        if val_loss < self.best:
            self.best, self.best_epoch, self.best_state = val_loss, epoch, state
            self.misses = 0
            return False
        self.misses += 1
        return self.misses >= self.patience


@dataclass
class TrainResult:
    params: dict
    adam_state: AdamState
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("nan")
    epochs_run: int = 0


def train_step(params, state, batch, ends, targets, hp, cfg, rng):
    with Tape() as tape:
        preds = forward(params, batch, ends, hp, cfg.metapaths, rng)
        value = loss(preds, targets)
    names = list(params)
    grads = nx.backward(value, tape, [params[k] for k in names])
    params, state = nx.adam_step(params, dict(zip(names, grads)), state, cfg.adam)
    return params, state, value.item(), dict(zip(names, grads))


def train(params, batch, targets, train_ends, val_ends, hp: Hyperparams, cfg: TrainConfig):
    """Fit ``params`` on windows ending at ``train_ends``.

    ``targets`` is (days, N), aligned with ``batch`` day positions. Validation
    MSE on ``val_ends`` drives early stopping; the best-validation parameters
    are restored. Without validation windows training runs ``max_epochs``.
    """
    errors = hp.validate() + cfg.validate()
    if errors:
        raise ValueError("; ".join(errors))
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.zeros_like(params)
    train_ends = np.asarray(train_ends, dtype=int)
    val_ends = np.asarray(val_ends, dtype=int)
    stopper = EarlyStopping(cfg.patience)
    history = []
    epoch = -1
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(train_ends)
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            ends = order[i:i + cfg.batch_size]
            try:
                params, state, value, _ = train_step(params, state, batch, ends,
                                                     targets[ends], hp, cfg, rng)
            except nx.NonFiniteError as exc:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}, step {state.step}: {exc}") from exc
            losses.append(value * len(ends))
        row = {"epoch": epoch, "train_loss": float(np.sum(losses) / max(len(order), 1))}
        if len(val_ends):
            val = float(np.mean((predict(params, batch, val_ends, hp, cfg.metapaths)
                                 - targets[val_ends]) ** 2))
            row["val_loss"] = val
            history.append(row)
            if stopper.update(val, epoch, (params, state)):
                break
        else:
            history.append(row)
    if stopper.best_state is not None:
        params, state = stopper.best_state
    return TrainResult(params, state, history, stopper.best_epoch,
                       float(stopper.best), epoch + 1)


# checkpoints ------------------------------------------------------------------

def save_checkpoint(path, params, state: AdamState, epoch, config, chash=None, extra=None):
    """Single ``.npz`` blob: JSON header plus parameter and Adam arrays."""
    meta = {"config": _jsonable(config), "config_hash": chash or config_hash(config),
            "epoch": int(epoch), "adam_step": int(state.step), "names": list(params),
            **_jsonable(extra or {})}
    arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for k, p in params.items():
        arrays[f"param/{k}"] = p.data
        arrays[f"adam_m/{k}"] = state.m[k]
        arrays[f"adam_v/{k}"] = state.v[k]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Returns ``(params, adam_state, meta)``."""
    with np.load(path) as z:
        meta = json.loads(z["__meta__"].tobytes().decode())
        params = {k: Tensor(z[f"param/{k}"], requires_grad=True) for k in meta["names"]}
        state = AdamState({k: z[f"adam_m/{k}"].copy() for k in meta["names"]},
                          {k: z[f"adam_v/{k}"].copy() for k in meta["names"]},
                          meta["adam_step"])
    return params, state, meta
