"""
The whole pipeline on a small plate
===================================

Same stages as ``lpbf-forecast pipeline``, at a size that runs in seconds.
Artifacts land in ``./demo_out``.
"""

import json

from lpbf_forecast import pipeline

cfg = pipeline.resolve_config({
    "grid": {"nx": 32, "ny": 32},
    "laser": {"omega_cells": 8.75},
    "stops_per_side": 8,
    "anneal": {"sweeps": 500},
    "dataset": {"mu": 4},
    "train": {"epochs": 10, "hidden": 8},
})
summary = pipeline.run_all(cfg, "demo_out")
print("J raster:", round(summary["objective_J_raster"], 3), " J tour:", round(summary["objective_J_tour"], 3))
print(json.dumps(summary["baseline"], indent=2))
