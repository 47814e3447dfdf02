#!/usr/bin/env python3
"""The six CLI stages run back to back on a temporary dataset.

Equivalent to:

    sweepnav simulate --out ds --seed 7 ...
    sweepnav infer    --dataset ds
    sweepnav refine   --dataset ds
    sweepnav eval     --dataset ds
    sweepnav map      --dataset ds --trajectory gt
    sweepnav plot     --dataset ds
"""

import json
import tempfile
from pathlib import Path

from sweepnav.cli import main

with tempfile.TemporaryDirectory() as tmp:
    ds = Path(tmp) / "ds"
    for argv in (
        ["simulate", "--out", str(ds), "--seed", "7",
         "--set", "sim.acc_noise=0.05", "--set", "sim.gyro_noise=0.002",
         "--set", "sim.n_items=4", "--set", "capture.distance_m=0.5"],
        ["infer", "--dataset", str(ds)],
        ["refine", "--dataset", str(ds), "--epochs", "50"],
        ["eval", "--dataset", str(ds), "--grid", "1.0"],
        ["map", "--dataset", str(ds), "--trajectory", "gt"],
        ["plot", "--dataset", str(ds)],
    ):
        rc = main(argv)
        assert rc == 0, f"{argv[0]} exited {rc}"

    manifest = json.loads((ds / "manifest.json").read_text())
    print(f"\ndataset artifacts: {len(manifest)}")
    report = json.loads((ds / "eval_grid_1.0.json").read_text())
    print(f"eval: rte_metric {report['rte_metric']:.4f} m on "
          f"trajectory '{report['trajectory']}'")
    map_eval = json.loads((ds / "map_eval.json").read_text())
    print(f"map: {map_eval['n_matched']} items matched, "
          f"mean error {map_eval['mean_error']:.3f} m")
