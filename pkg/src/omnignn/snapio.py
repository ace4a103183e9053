"""On-disk formats for daily market snapshots.

JSON (schema ``v1``), one document per trading day::

    {"schema": "v1", "date": 17, "tickers": [...], "gics": ["45103010", ...],
     "holders": [{"H03": 0.4, ...}, ...], "revenues": [...], "esg": [...],
     "features": [[...], ...], "industry_features": [...],
     "prices": [...], "index_level": 3012.5, "config_hash": "..."}

``prices`` and ``index_level`` ride along so excess-return targets can be
rebuilt from the files alone. ``esg`` is the raw 0-100 governance score.

CSV, one file per day named ``<date>.csv`` with one row per stock. Column
dictionary:

=====================  ===================================================
``ticker``             stock identifier; same set and order every day
``gics``               8-digit GICS sub-industry code
``price``              close price (> 0)
``revenue``            latest reported revenue (>= 0)
``esg``                governance score, 0-100
``index_level``        market index close; identical on every row
``f_<k>``              stock feature k (k = 0, 1, ...)
``ind_<k>``            industry feature k; identical on every row
``holder:<name>``      ownership weight of shareholder ``name`` (blank = 0)
=====================  ===================================================
"""
from __future__ import annotations

import csv
import json
import os

import numpy as np

from .market_graph import SCHEMA_VERSION, GicsCode
from .synthdata import MarketSeries


def _holder_names(n):
    return [f"H{h:02d}" for h in range(n)]


def snapshot_doc(series: MarketSeries, t, config_hash=""):
    names = _holder_names(series.holders.shape[2])
    holders = [{names[h]: float(w) for h, w in enumerate(row) if w > 0}
               for row in series.holders[t]]
    date = series.dates[t] if series.dates else t
    return {
        "schema": SCHEMA_VERSION,
        "date": date,
        "tickers": list(series.tickers),
        "gics": [str(g) for g in series.gics],
        "holders": holders,
        "revenues": series.revenues[t].tolist(),
        "esg": series.esg[t].tolist(),
        "features": series.raw_features[t].tolist(),
        "industry_features": series.industry_features[t].tolist(),
        "prices": series.prices[t].tolist(),
        "index_level": float(series.index_level[t]),
        "config_hash": config_hash,
    }


def write_snapshots(series: MarketSeries, out_dir, config_hash="", extra=None):
    """Write one JSON file per day plus ``manifest.json``; returns the file names."""
    os.makedirs(out_dir, exist_ok=True)
    width = max(4, len(str(series.n_days - 1)))
    files = []
    for t in range(series.n_days):
        name = f"snapshot_{t:0{width}d}.json"
        path = os.path.join(out_dir, name)
        try:
            with open(path, "w") as fh:
                json.dump(snapshot_doc(series, t, config_hash), fh, sort_keys=True)
        except OSError as exc:
            raise OSError(f"cannot write snapshot {path}: {exc}") from exc
        files.append(name)
    manifest = {"schema": SCHEMA_VERSION, "config_hash": config_hash, "n_days": series.n_days,
                "n_stocks": series.n_stocks, "files": files, **(extra or {})}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    return files


def read_manifest(snap_dir):
    path = os.path.join(snap_dir, "manifest.json")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read manifest {path}: {exc}") from exc


def _series_from_docs(docs, source):
    if not docs:
        raise ValueError(f"no snapshots found in {source}")
    first = docs[0]
    tickers, gics = tuple(first["tickers"]), tuple(first["gics"])
    names = sorted({h for d in docs for row in d["holders"] for h in row})
    col = {h: k for k, h in enumerate(names)}
    D, N = len(docs), len(tickers)
    holders = np.zeros((D, N, max(len(names), 1)))
    for t, d in enumerate(docs):
        if d.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ValueError(f"day {d.get('date')}: unsupported schema {d.get('schema')!r}")
        if tuple(d["tickers"]) != tickers or tuple(d["gics"]) != gics:
            raise ValueError(f"day {d['date']}: ticker/GICS universe differs from day "
                             f"{first['date']}")
        for i, row in enumerate(d["holders"]):
            for h, w in row.items():
                holders[t, i, col[h]] = w
    stack = lambda key: np.array([d[key] for d in docs], dtype=float)  # noqa: E731
    return MarketSeries(stack("prices"), stack("index_level"), stack("features"),
                        stack("industry_features"), holders, stack("revenues"), stack("esg"),
                        tuple(GicsCode.from_code(g) for g in gics), tickers,
                        tuple(d["date"] for d in docs))


def read_snapshots(snap_dir):
    """Load a directory written by :func:`write_snapshots` back into a series."""
    manifest = read_manifest(snap_dir)
    docs = []
    for name in manifest["files"]:
        path = os.path.join(snap_dir, name)
        try:
            with open(path) as fh:
                docs.append(json.load(fh))
        except OSError as exc:
            raise OSError(f"cannot read snapshot {path}: {exc}") from exc
    return _series_from_docs(docs, snap_dir), manifest


def _indexed(header, prefix):
    cols = [h for h in header if h.startswith(prefix) and h[len(prefix):].isdigit()]
    return sorted(cols, key=lambda h: int(h[len(prefix):]))


def _csv_doc(path, date):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    header = list(rows[0])
    required = ["ticker", "gics", "price", "revenue", "esg", "index_level"]
    missing = [c for c in required if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    fcols, icols = _indexed(header, "f_"), _indexed(header, "ind_")
    hcols = [h for h in header if h.startswith("holder:")]
    num = lambda v: float(v) if v not in ("", None) else 0.0  # noqa: E731
    for key in ["index_level"] + icols:
        if len({r[key] for r in rows}) != 1:
            raise ValueError(f"{path}: column {key} must be identical on every row")
    return {
        "schema": SCHEMA_VERSION, "date": date,
        "tickers": [r["ticker"] for r in rows], "gics": [r["gics"] for r in rows],
        "holders": [{h[7:]: num(r[h]) for h in hcols if num(r[h]) > 0} for r in rows],
        "revenues": [num(r["revenue"]) for r in rows], "esg": [num(r["esg"]) for r in rows],
        "features": [[num(r[c]) for c in fcols] for r in rows],
        "industry_features": [num(rows[0][c]) for c in icols],
        "prices": [num(r["price"]) for r in rows], "index_level": num(rows[0]["index_level"]),
    }


def read_csv_dir(csv_dir):
    """Ingest per-day CSV files (sorted by file name) into a series."""
    names = sorted(n for n in os.listdir(csv_dir) if n.endswith(".csv"))
    docs = [_csv_doc(os.path.join(csv_dir, n), n[:-4]) for n in names]
    return _series_from_docs(docs, csv_dir)


def write_csv_day(path, doc):
    """Inverse of the CSV reader for one snapshot document."""
    holders = sorted({h for row in doc["holders"] for h in row})
    F, FI = len(doc["features"][0]), len(doc["industry_features"])
    header = (["ticker", "gics", "price", "revenue", "esg", "index_level"]
              + [f"f_{k}" for k in range(F)] + [f"ind_{k}" for k in range(FI)]
              + [f"holder:{h}" for h in holders])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, tk in enumerate(doc["tickers"]):
            w.writerow([tk, doc["gics"][i], repr(doc["prices"][i]), repr(doc["revenues"][i]),
                        repr(doc["esg"][i]), repr(doc["index_level"])]
                       + [repr(v) for v in doc["features"][i]]
                       + [repr(v) for v in doc["industry_features"]]
                       + [repr(doc["holders"][i].get(h, 0.0)) for h in holders])
