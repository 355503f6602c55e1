"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
under "acceptance criteria". Tolerances are the stated ones; nothing here is
relaxed to make a run pass.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from gradcheck import case, max_rel_error
from lpbf_forecast import pipeline
from lpbf_forecast.dataset import Windows
from lpbf_forecast.features import SubdomainPartition, stop_cost, subdomain_stats
from lpbf_forecast.heatsim import (GridSpec, LaserParams, MaterialParams, TemperatureField, analytic_mode_field,
                                   gaussian_intensity, max_stable_dt, step)
from lpbf_forecast.lstm import LstmLayer, TrainConfig, cell_forward, forecast, loss_hmse, stack_forward, train
from lpbf_forecast.tour import (AnnealSchedule, brute_force_tour, build_penalty_matrix, line_metric_optimum,
                                raster_tour, simulated_annealing, tour_cost)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
MAT = MaterialParams()


def test_c1_pde_convergence(criterion):
    t0 = time.perf_counter()
    t_end = 2000.0
    sizes, errs = (32, 64, 128), []
    for n in sizes:
        grid = GridSpec(n, n)
        steps = math.ceil(t_end / max_stable_dt(grid, MAT))
        dt = t_end / steps
        f = analytic_mode_field(grid, 1, 0.0, 1.0, MAT)
        for _ in range(steps):
            f = step(f, None, dt, MAT)
        d = f.values - analytic_mode_field(grid, 1, t_end, 1.0, MAT).values
        errs.append(math.sqrt(np.sum(d * d) * grid.hx * grid.hy))  # discrete L2
    hs = [2.0 / (n - 1) for n in sizes]
    orders = [math.log(errs[k] / errs[k + 1]) / math.log(hs[k] / hs[k + 1]) for k in range(2)]
    secs = time.perf_counter() - t0
    ok = min(orders) >= 1.85 and secs < 30
    criterion("1 PDE convergence order", ok, f"orders={orders[0]:.3f},{orders[1]:.3f} (>=1.85) in {secs:.1f}s (<30s)")
    assert ok


def test_c2_maximum_principle(criterion):
    rng = np.random.default_rng(20)
    worst_rise = 0.0
    clamp_ok = True
    for _ in range(1000):
        n, m = rng.integers(16, 41, size=2)
        grid = GridSpec(int(n), int(m))
        theta0 = float(rng.uniform(0, 100))
        u = np.full(grid.shape, theta0)
        u[1:-1, 1:-1] += rng.uniform(-50, 50, (n - 2, m - 2)) * rng.random()
        f = TemperatureField(grid, u, theta0=theta0)
        dt = max_stable_dt(grid, MAT) * (1.0 if rng.random() < 0.2 else rng.uniform(0.01, 1.0))
        for _ in range(4):
            g = step(f, None, dt, MAT)
            worst_rise = max(worst_rise, g.values.max() - f.values.max(), f.values.min() - g.values.min())
            ring = np.concatenate([g.values[0], g.values[-1], g.values[:, 0], g.values[:, -1]])
            clamp_ok &= bool(np.all(ring == theta0))
            f = g
    ok = worst_rise <= 0.0 and clamp_ok
    criterion("2 maximum principle", ok, f"1000 fields, worst max-rise/min-drop={worst_rise:.3g}, clamp exact={clamp_ok}")
    assert ok


def test_c3_laser_deposit(criterion):
    grid = GridSpec(128, 128)
    laser = LaserParams.from_cells(grid)
    X, Y = grid.mesh()
    total = float(gaussian_intensity(X, Y, laser).sum() * grid.hx * grid.hy)
    rel = abs(total - laser.power) / laser.power
    ok = rel < 0.01
    criterion("3 laser deposit integral", ok, f"rel error {rel:.2e} (<1e-2)")
    assert ok


def test_c4_penalty_matrix(criterion, raster_run_64):
    part = SubdomainPartition(raster_run_64.grid)
    s = np.zeros(256)
    for snap in raster_run_64.snapshots:
        s[snap.stop] = stop_cost(subdomain_stats([snap], part), 600.0)
    C = build_penalty_matrix(s).C
    ok = np.array_equal(C, C.T) and not np.diag(C).any()
    rng = np.random.default_rng(4)
    violations = 0
    for _ in range(50):
        sub = C[np.ix_(*[rng.choice(256, 20, replace=False)] * 2)]
        # every (i, j, k): C[i,k] <= C[i,j] + C[j,k]
        violations += int(np.sum(sub[:, None, :] > sub[:, :, None] + sub[None, :, :]))
    ok = ok and violations == 0
    criterion("4 penalty matrix invariants", ok, f"symmetric+zero diagonal, triangle violations={violations} over 50x20^3 triples")
    assert ok


def test_c5_tsp_oracles(criterion, raster_run_64):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(25):
        s = np.random.default_rng(seed).uniform(0, 1e6, 8)
        pm = build_penalty_matrix(s)
        res = simulated_annealing(pm, AnnealSchedule(sweeps=2000, proposals=64, seed=seed))
        mismatches += res.cost != brute_force_tour(pm)[1]
    part = SubdomainPartition(raster_run_64.grid)
    prior = np.zeros(256)
    for snap in raster_run_64.snapshots:
        prior[snap.stop] = stop_cost(subdomain_stats([snap], part), 600.0)
    instances = [prior] + [np.random.default_rng(100 + k).lognormal(12, 1, 256) for k in range(2)]
    gaps, below_raster = [], True
    for k, s in enumerate(instances):
        pm = build_penalty_matrix(s)
        init = raster_tour(16)
        res = simulated_annealing(pm, AnnealSchedule(seed=k), init)
        opt = line_metric_optimum(pm.costs)
        gaps.append((res.cost - opt) / opt)
        below_raster &= res.cost <= tour_cost(init, pm)
    secs = time.perf_counter() - t0
    ok = mismatches == 0 and max(gaps) <= 0.01 and below_raster and secs < 60
    criterion("5 TSP oracles", ok, f"n=8 mismatches={mismatches}/25, n=256 max gap={max(gaps):.2e} (<=1e-2), "
              f"<=raster={below_raster}, {secs:.1f}s (<60s)")
    assert ok


def test_c6_lstm_gradients(criterion):
    worst = max(max_rel_error(*case(seed, q=4, T=3, b=2)) for seed in range(24))
    ok = worst < 1e-4
    criterion("6 LSTM gradient check", ok, f"24 seeds, max rel error {worst:.2e} (<1e-4)")
    assert ok


def test_c7_cell_oracle(criterion):
    rng = np.random.default_rng(7)
    q, b = 5, 4
    x = rng.normal(size=(b, 1))
    h0 = rng.normal(size=(b, q))
    c0 = rng.normal(scale=3.0, size=(b, q))
    h, c, cache = cell_forward(x, h0, c0, LstmLayer.zeros(1, q))
    gates = max(np.max(np.abs(cache[g] - 0.5)) for g in ("gu", "gf", "go"))
    err = max(gates, np.max(np.abs(c - 0.5 * c0)), np.max(np.abs(h - 0.5 * np.tanh(0.5 * c0))))
    ok = err <= 1e-12
    criterion("7 zero-weight cell oracle", ok, f"max deviation {err:.1e} (<=1e-12)")
    assert ok


@pytest.fixture(scope="module")
def sine_fit():
    n, T = 200, 50
    x = np.sin(np.arange(n) * 2 * np.pi / 25)
    idx = np.arange(0, n - T, 5)[:, None] + np.arange(T)
    win = Windows(x[idx], x[idx + 1], [], n)
    t0 = time.perf_counter()
    with threadpool_limits(1):
        model, hist = train(win, TrainConfig(epochs=300, hidden=32, dropout=0.0, seed=0))
    secs = time.perf_counter() - t0
    return x, win, model, hist, secs


def test_c8_capacity(criterion, sine_fit):
    x, win, model, hist, secs = sine_fit
    out, _ = stack_forward(win.inputs.T[:, :, None], model)
    final = loss_hmse(out, win.targets.T[:, :, None])
    ok = final < 1e-3 and secs < 120
    criterion("8 sine capacity", ok, f"half-MSE {final:.2e} after 300 epochs (<1e-3; last epoch mean {hist[-1]:.2e}), "
              f"{secs:.1f}s (<120s)")
    assert ok


def test_sine_forecast_beats_persistence(sine_fit):
    # not a numbered criterion: the fitted toy must beat free-running persistence
    x, _, model, _, _ = sine_fit
    errs, base = [], []
    for start in range(60, 184, 7):
        pred = forecast(model, x[:start], 16, nu=50)
        truth = x[start:start + 16]
        errs.append(np.sqrt(np.mean((pred - truth) ** 2)))
        base.append(np.sqrt(np.mean((x[start - 1] - truth) ** 2)))
    assert np.mean(errs) < np.mean(base)


def _files(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.slow
def test_c9_desk_run(criterion, tmp_path):
    cfg = pipeline.load_config(CONFIGS / "desk.json")
    t0 = time.perf_counter()
    with threadpool_limits(1):
        summary = pipeline.run_all(cfg, tmp_path / "desk")
    secs = time.perf_counter() - t0
    pct = json.loads((tmp_path / "desk" / "eval" / "percentiles.json").read_text())
    first = pct["first_map"]
    monotone = all(
        [p["rmse"] for p in pct[scale]["picks"]] == sorted(p["rmse"] for p in pct[scale]["picks"])
        for scale in ("normalized", "physical"))
    b = summary["baseline"]
    beats = b["median_rmse_normalized"] < b["median_baseline_normalized"]
    ok = first == 15 and beats and monotone and secs < 20 * 60
    criterion("9 desk-scale end-to-end", ok,
              f"first map {first} (=15), median RMSE lstm={b['median_rmse_normalized']:.4f} vs "
              f"persistence={b['median_baseline_normalized']:.4f}, monotone={monotone}, {secs / 60:.1f} min (<20)")
    assert ok


def test_c10_determinism(criterion, tmp_path):
    cfg = pipeline.resolve_config({
        "grid": {"nx": 32, "ny": 32}, "laser": {"omega_cells": 8.75}, "stops_per_side": 6,
        "anneal": {"sweeps": 300}, "dataset": {"mu": 4}, "train": {"epochs": 4, "hidden": 8},
    }, seed=11)
    with threadpool_limits(1):
        pipeline.run_all(cfg, tmp_path / "a")
        pipeline.run_all(cfg, tmp_path / "b")
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    diff = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = not diff and len(a) > 40
    criterion("10 byte-identical reruns", ok, f"{len(a)} files compared, {len(diff)} differ")
    assert ok
