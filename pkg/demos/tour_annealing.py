"""
Ordering the stops
==================

Price every stop on a raster run, build the penalty matrix and anneal a
tour. The matrix is a line metric, so the optimum is known exactly.
"""

import numpy as np

from lpbf_forecast.features import SubdomainPartition, stop_cost, subdomain_stats
from lpbf_forecast.heatsim import GridSpec, LaserParams, simulate_tour
from lpbf_forecast.tour import (AnnealSchedule, build_penalty_matrix, line_metric_optimum, raster_tour,
                                simulated_annealing, tour_cost)

grid = GridSpec(48, 48)
run = simulate_tour(raster_tour(16), grid, laser=LaserParams.from_cells(grid, omega_cells=13))

# %%
# One cost per stop from the snapshot of the move that ends there.
part = SubdomainPartition(grid)
s = np.zeros(256)
for snap in run.snapshots:
    s[snap.stop] = stop_cost(subdomain_stats([snap], part), u_g=600.0)
pm = build_penalty_matrix(s)

# %%
res = simulated_annealing(pm, AnnealSchedule(seed=0), initial=raster_tour(16))
print(f"raster tour     {tour_cost(raster_tour(16), pm):.6g}")
print(f"annealed tour   {res.cost:.6g}")
print(f"line optimum    {line_metric_optimum(pm.costs):.6g}")
print("first stops:", res.tour[:12])
