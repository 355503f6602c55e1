"""
From heat maps to training windows
==================================

Sixteen gradient features per map, z-scored on the first 70% of maps,
then cut into next-value windows of mu maps each.
"""

import numpy as np

from lpbf_forecast.dataset import extract_features, normalize, window
from lpbf_forecast.heatsim import GridSpec, LaserParams, simulate_tour
from lpbf_forecast.tour import raster_tour

grid = GridSpec(48, 48)
run = simulate_tour(raster_tour(8), grid, laser=LaserParams.from_cells(grid, omega_cells=13))
series = extract_features(run, mu=6)
print("feature table:", series.table.shape, " flattened:", series.X.shape)

z, stats = normalize(series, "zscore", split=0.7)
print("normalization:", stats.to_dict())

win = window(z, split=0.7)
print(f"{len(win)} windows of {win.inputs.shape[1]} values; forecastable maps "
      f"{win.eval_maps[0]}..{win.eval_maps[-1]}")
assert np.array_equal(win.inputs[0, 1:], win.targets[0, :-1])
