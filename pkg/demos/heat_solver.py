"""
Heating a plate with a moving beam
==================================

Forward-Euler diffusion on [-1, 1]^2 with a Gaussian source, first on an
analytic decay mode, then along a short raster.
"""

import numpy as np

from lpbf_forecast.heatsim import (GridSpec, LaserParams, MaterialParams, analytic_mode_field, max_stable_dt,
                                   simulate_tour, step, stop_positions)
from lpbf_forecast.tour import raster_tour

mat = MaterialParams()
print(f"aluminium diffusivity alpha = {mat.alpha:.4g} m^2/s")

# %%
# The lowest Dirichlet mode decays as exp(-alpha pi^2 t / 2); compare a few grids.
t_end = 1000.0
for n in (32, 64, 128):
    grid = GridSpec(n, n)
    steps = int(np.ceil(t_end / max_stable_dt(grid, mat)))
    f = analytic_mode_field(grid, 1, 0.0, 1.0, mat)
    for _ in range(steps):
        f = step(f, None, t_end / steps, mat)
    err = np.abs(f.values - analytic_mode_field(grid, 1, t_end, 1.0, mat).values).max()
    print(f"n={n:4d}  steps={steps:5d}  max error={err:.3e}")

# %%
# A 4x4 raster on a 64x64 grid; each snapshot is the field after one move.
grid = GridSpec(64, 64)
laser = LaserParams.from_cells(grid, omega_cells=17.5)
run = simulate_tour(raster_tour(4), grid, mat, laser, stop_positions(4))
for snap in run.snapshots[::3]:
    print(f"stop {snap.stop:2d}  t=[{snap.t_start:8.2f}, {snap.t_end:8.2f}]  peak {snap.values.max():8.1f} C")
