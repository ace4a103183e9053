"""
Snapshot files and the command line
===================================

The same pipeline driven through files: generate JSON snapshots, train on
one window, then backtest from the checkpoint. Equivalent shell commands:

    omnignn gen --config run.json --out snaps
    omnignn train --config run.json --snapshots snaps --out ck.npz
    omnignn backtest --config run.json --snapshots snaps --checkpoint ck.npz --out bt
"""

import json
import os
import tempfile

from omnignn import cli

config = {"seed": 1, "universe": {"n_stocks": 5, "n_days": 260},
          "model": {"d_h": 8, "gat_heads": 1, "gat_layers": 2, "n_heads": 2, "window": 2},
          "train": {"max_epochs": 5, "patience": 3}, "schedule": {"windows": [0]}}

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "run.json")
    with open(path, "w") as fh:
        json.dump(config, fh)
    snaps, ck, out = (os.path.join(tmp, n) for n in ("snaps", "ck.npz", "bt"))
    cli.main(["gen", "--config", path, "--out", snaps])
    print(len(os.listdir(snaps)), "files; first day keys:",
          sorted(json.load(open(os.path.join(snaps, "snapshot_0000.json")))))
    cli.main(["train", "--config", path, "--snapshots", snaps, "--out", ck])
    cli.main(["backtest", "--config", path, "--snapshots", snaps, "--checkpoint", ck,
              "--out", out])
    print(open(os.path.join(out, "report.csv")).read())
