"""Command-line front end: ``omnignn {gen,train,backtest,ablate,report}``.

A run is described by one JSON document with the sections below; every
field is optional and command-line flags override the file::

    {"seed": 0,
     "universe": {"n_stocks": 10, "n_days": 1000, "factor_strength": 0.8, ...},
     "model": {"d_h": 64, "gat_layers": 3, "window": 20, ...},
     "train": {"lr": 0.001, "max_epochs": 600, "patience": 50, "metapaths": ["SS", "SIS"]},
     "schedule": {"train_months": 6, "val_months": 2, "test_months": 2,
                  "month_days": 21, "calendar": false, "k_frac": 0.3,
                  "variance_target": 0.95, "windows": null}}

``OMNIGNN_SEED`` overrides ``seed``; an explicit ``--seed`` beats both.
Exit status is 0 on success, 2 for configuration errors and 3 for failures
while running.
"""
from __future__ import annotations

import argparse
import copy
import datetime
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace

from . import backtest as bt
from . import model as mdl
from . import snapio
from .synthdata import UniverseSpec, generate

log = logging.getLogger("omnignn")

SCHEDULE_DEFAULTS = {"train_months": 6, "val_months": 2, "test_months": 2, "month_days": 21,
                     "calendar": False, "k_frac": 0.3, "variance_target": 0.95, "windows": None}
SECTIONS = {"universe": UniverseSpec, "model": mdl.Hyperparams, "train": mdl.TrainConfig}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class RunConfig:
    seed: int = 0
    universe: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)

    def spec(self):
        return UniverseSpec(**{**self.universe, "seed": self.seed})

    def hp(self):
        return mdl.Hyperparams(**self.model)

    def cfg(self):
        return mdl.TrainConfig(**{**self.train, "seed": self.seed})

    def sched(self):
        return {**SCHEDULE_DEFAULTS, **self.schedule}

    def to_dict(self):
        return {"seed": self.seed, "universe": dict(self.universe), "model": dict(self.model),
                "train": dict(self.train), "schedule": dict(self.schedule)}

    def hash(self):
        return mdl.config_hash(self.to_dict())


def _field_names(cls):
    return {f.name for f in fields(cls)} - {"seed"}


def _construct(cls, values, section):
    """Build a dataclass, converting constructor failures into messages."""
    try:
        obj = cls(**values)
    except (TypeError, ValueError) as exc:
        return None, [f"{section}: {exc}"]
    check = getattr(obj, "validate", None)
    return obj, [f"{section}: {m}" for m in (check() if check else [])]


def validate_config(raw) -> RunConfig:
    """Check every field at once and raise one :class:`ConfigError` listing all problems."""
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    top = {"seed", "universe", "model", "train", "schedule"}
    problems += [f"unknown top-level key {k!r}" for k in sorted(set(raw) - top)]
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append(f"seed must be a non-negative integer, got {seed!r}")
        seed = 0
    cfg = RunConfig(seed=seed)
    for name, cls in SECTIONS.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            problems.append(f"{name} must be an object")
            continue
        problems += [f"unknown key {name}.{k}" for k in sorted(set(sec) - _field_names(cls))]
        known = {k: v for k, v in sec.items() if k in _field_names(cls)}
        seeded = {"seed": seed} if "seed" in {f.name for f in fields(cls)} else {}
        _, errs = _construct(cls, {**known, **seeded}, name)
        problems += errs
        setattr(cfg, name, known)
    sched = raw.get("schedule", {})
    if not isinstance(sched, dict):
        problems.append("schedule must be an object")
        sched = {}
    problems += [f"unknown key schedule.{k}" for k in sorted(set(sched) - set(SCHEDULE_DEFAULTS))]
    cfg.schedule = {k: v for k, v in sched.items() if k in SCHEDULE_DEFAULTS}
    s = cfg.sched()
    for k in ("train_months", "val_months", "test_months", "month_days"):
        if not isinstance(s[k], int) or s[k] < 1:
            problems.append(f"schedule.{k} must be a positive integer, got {s[k]!r}")
    if not (isinstance(s["k_frac"], (int, float)) and 0 < s["k_frac"] <= 1):
        problems.append(f"schedule.k_frac must lie in (0, 1], got {s['k_frac']!r}")
    if not (isinstance(s["variance_target"], (int, float)) and 0 < s["variance_target"] <= 1):
        problems.append(f"schedule.variance_target must lie in (0, 1], got "
                        f"{s['variance_target']!r}")
    if s["windows"] is not None and not (isinstance(s["windows"], list)
                                         and all(isinstance(w, int) for w in s["windows"])):
        problems.append("schedule.windows must be null or a list of window ids")
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path=None, overrides=None, env=None) -> RunConfig:
    raw = {}
    if path:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config {path} is not valid JSON: {exc}"]) from exc
    raw = copy.deepcopy(raw)
    env = os.environ if env is None else env
    if env.get("OMNIGNN_SEED") not in (None, ""):
        try:
            raw["seed"] = int(env["OMNIGNN_SEED"])
        except ValueError as exc:
            raise ConfigError([f"OMNIGNN_SEED must be an integer, got "
                               f"{env['OMNIGNN_SEED']!r}"]) from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            sec, name = key.split(".", 1)
            if not isinstance(raw.get(sec, {}), dict):
                continue
            raw.setdefault(sec, {})[name] = value
        else:
            raw[key] = value
    return validate_config(raw)


# shared helpers --------------------------------------------------------------

def _windows(cfg: RunConfig, series):
    s = cfg.sched()
    if s["calendar"]:
        try:
            dates = [d if hasattr(d, "month") else datetime.date.fromisoformat(str(d))
                     for d in series.dates]
        except ValueError as exc:
            raise ConfigError([f"schedule.calendar needs ISO dates (YYYY-MM-DD): {exc}"]) from exc
        wins = bt.schedule_calendar(dates, s["train_months"], s["val_months"], s["test_months"])
    else:
        m = s["month_days"]
        wins = bt.schedule(series.n_days, s["train_months"] * m, s["val_months"] * m,
                           s["test_months"] * m)
    if s["windows"] is not None:
        keep = set(s["windows"])
        missing = sorted(keep - {w.id for w in wins})
        if missing:
            raise ConfigError([f"schedule.windows: no window with id {missing}"])
        wins = [w for w in wins if w.id in keep]
    return wins


def _load_series(args, cfg: RunConfig):
    if getattr(args, "csv", None):
        return snapio.read_csv_dir(args.csv)
    if getattr(args, "snapshots", None):
        series, _ = snapio.read_snapshots(args.snapshots)
        return series
    return generate(cfg.spec())


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit_report(report, out_dir, stem, chart=True):
    _write(os.path.join(out_dir, f"{stem}.json"), report.to_json())
    _write(os.path.join(out_dir, f"{stem}.csv"), report.to_csv())
    if chart:
        _write(os.path.join(out_dir, f"{stem}.svg"), bt.bar_chart_svg([report]))


def _predictions_doc(details, cfg: RunConfig, label):
    return {"config": cfg.to_dict(), "config_hash": cfg.hash(), "label": label,
            "k_frac": cfg.sched()["k_frac"], "windows": details}


# subcommands -----------------------------------------------------------------

def cmd_gen(args, cfg: RunConfig):
    series = generate(cfg.spec())
    files = snapio.write_snapshots(series, args.out, cfg.hash(),
                                   extra={"config": cfg.to_dict()})
    print(f"wrote {len(files)} snapshots to {args.out}")


def cmd_train(args, cfg: RunConfig):
    series = _load_series(args, cfg)
    wins = _windows(cfg, series)
    by_id = {w.id: w for w in wins}
    if args.window not in by_id:
        raise ConfigError([f"--window {args.window}: schedule has ids {sorted(by_id)}"])
    win, hp, tc = by_id[args.window], cfg.hp(), cfg.cfg()
    data, params, result, scale = bt.fit_window(series, win, hp, tc,
                                                cfg.sched()["variance_target"])
    mdl.save_checkpoint(args.out, params, result.adam_state, result.best_epoch,
                        cfg.to_dict(), chash=cfg.hash(),
                        extra={"window": win.id, "target_scale": scale,
                               "history": result.history})
    print(f"window {win.id}: best epoch {result.best_epoch}, val loss "
          f"{result.best_val_loss:.6g}; checkpoint {args.out}")


def cmd_backtest(args, cfg: RunConfig):
    s = cfg.sched()
    if args.metrics_only:
        if not args.predictions:
            raise ConfigError(["--metrics-only needs --predictions FILE"])
        with open(args.predictions) as fh:
            doc = json.load(fh)
        report = bt.report_from_predictions(doc["windows"], doc["k_frac"], doc["label"],
                                            doc["config_hash"])
        _emit_report(report, args.out, "report", chart=not args.no_chart)
        print(json.dumps(report.aggregate, sort_keys=True))
        return
    params = None
    if not args.train_inline:
        if not args.checkpoint:
            raise ConfigError(["backtest needs --checkpoint PATH or --train-inline"])
        params, _, _ = mdl.load_checkpoint(args.checkpoint)
    series = _load_series(args, cfg)
    tc = cfg.cfg()
    label = "+".join(p.value for p in tc.metapaths)
    report, details = bt.run_backtest(series, cfg.hp(), tc, _windows(cfg, series), s["k_frac"],
                                      s["variance_target"], train=args.train_inline,
                                      jobs=args.jobs, label=label, params=params)
    report = replace(report, config_hash=cfg.hash())
    _emit_report(report, args.out, "report", chart=not args.no_chart)
    _write(os.path.join(args.out, "predictions.json"), _dump(_predictions_doc(details, cfg,
                                                                               label)))
    print(json.dumps(report.aggregate, sort_keys=True))


def cmd_ablate(args, cfg: RunConfig):
    s = cfg.sched()
    series = _load_series(args, cfg)
    abl, full, table = bt.run_ablation(series, cfg.hp(), cfg.cfg(), _windows(cfg, series),
                                       drop=args.drop, k_frac=s["k_frac"],
                                       variance_target=s["variance_target"], jobs=args.jobs)
    h = cfg.hash()
    abl, full = replace(abl, config_hash=h), replace(full, config_hash=h)
    _emit_report(abl, args.out, "ablated", chart=False)
    _emit_report(full, args.out, "full", chart=False)
    _write(os.path.join(args.out, "ablation.json"),
           _dump({"config_hash": h, "baseline": abl.label, "candidate": full.label,
                  "table": table}))
    if not args.no_chart:
        _write(os.path.join(args.out, "ablation.svg"), bt.bar_chart_svg([abl, full]))
    print(_dump(table), end="")


def cmd_report(args, cfg: RunConfig):
    reports = []
    for path in args.reports:
        with open(path) as fh:
            reports.append(bt.BacktestReport.from_dict(json.load(fh)))
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "chart.svg"), bt.bar_chart_svg(reports))
    summary = {"reports": [{"label": r.label, "config_hash": r.config_hash,
                            "aggregate": r.aggregate} for r in reports]}
    if len(reports) == 2:
        summary["table"] = bt.relative_table(reports[0], reports[1])
    _write(os.path.join(args.out, "summary.json"), _dump(summary))
    print(_dump(summary), end="")


# argument parsing --------------------------------------------------------------

def _regime(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected START,END,MULT")
    return [int(parts[0]), int(parts[1]), float(parts[2])]


def build_parser():
    p = argparse.ArgumentParser(prog="omnignn", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True)
        sp.add_argument("--stocks", type=int, dest="universe.n_stocks")
        sp.add_argument("--days", type=int, dest="universe.n_days")
        sp.add_argument("--factor-strength", type=float, dest="universe.factor_strength")
        sp.add_argument("--regime", type=_regime, dest="universe.regime",
                        help="START,END,MULT: scale factor volatility over a day span")
        if data:
            src = sp.add_mutually_exclusive_group()
            src.add_argument("--snapshots", help="directory written by `gen`")
            src.add_argument("--csv", help="directory of per-day CSV files")
            sp.add_argument("--max-epochs", type=int, dest="train.max_epochs")
            sp.add_argument("--patience", type=int, dest="train.patience")
            sp.add_argument("--metapaths", nargs="+", dest="train.metapaths")
            sp.add_argument("--windows", type=int, nargs="+", dest="schedule.windows")
            sp.add_argument("--jobs", type=int, default=1)
            sp.add_argument("--no-chart", action="store_true")

    g = sub.add_parser("gen", help="write synthetic daily snapshots and a manifest")
    common(g, data=False)
    t = sub.add_parser("train", help="train one window and save a checkpoint")
    common(t)
    t.add_argument("--window", type=int, default=0)
    b = sub.add_parser("backtest", help="rolling-window backtest report")
    common(b)
    b.add_argument("--checkpoint")
    b.add_argument("--train-inline", action="store_true",
                   help="train a fresh model inside every window")
    b.add_argument("--metrics-only", action="store_true",
                   help="recompute metrics from --predictions without the model")
    b.add_argument("--predictions")
    a = sub.add_parser("ablate", help="paired backtests with and without a metapath")
    common(a)
    a.add_argument("--drop", default="SIS")
    r = sub.add_parser("report", help="chart and compare saved report JSON files")
    r.add_argument("reports", nargs="+")
    r.add_argument("--out", required=True)
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    return p


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "backtest": cmd_backtest, "ablate": cmd_ablate,
            "report": cmd_report}


def main(argv=None, env=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if "." in k}
    if getattr(args, "jobs", 1) < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, {"seed": args.seed, **overrides}, env)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status 3
        log.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
