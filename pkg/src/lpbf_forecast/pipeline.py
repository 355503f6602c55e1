"""Staged, seeded pipeline: simulate -> tour -> simulate -> dataset -> train -> predict -> evaluate.

Every stage reads and writes plain files under one output directory:

    prior/      raster run used to price the stops
    tour/       stop costs, penalty matrix, optimized tour, summary
    run/        run driven by the optimized tour (or a user tour file)
    dataset/    gradient-feature and mean-temperature tables
    model/      LSTM parameters and training loss
    predict/    closed-loop forecasts per map
    eval/       RMSE curve, percentile report, baseline, SVG charts

Each stage drops a ``stage.json`` with the config hash and the SHA-256 of
every file it wrote.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
from pathlib import Path

import numpy as np

from . import storage
from .dataset import FeatureSeries, NormStats, normalize, window
from .evaluation import (curve_svg, exemplar_svg, percentiles, persistence_curve, rmse_curve)
from .features import SubdomainPartition, objective_J, stop_cost, subdomain_stats
from .heatsim import GridSpec, LaserParams, MaterialParams, simulate_tour, stop_positions
from .lstm import TrainConfig, forecast, load_model, save_model, train
from .tour import (AnnealSchedule, build_penalty_matrix, line_metric_optimum, raster_tour,
                   simulated_annealing, tour_cost, validate_tour)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "grid": {"nx": 128, "ny": 128},
    "material": {"kappa": 237.0, "c_heat": 897.0, "rho": 2700.0},
    "laser": {"power": 4200.0, "omega_cells": 35.0},
    "theta0": 20.0,
    "u0": None,
    "stops_per_side": 16,
    "substeps": 20,
    "tau": None,
    "features": {"u_g": 600.0, "literal_lambda": False, "norm": "summed", "scalar": "squared"},
    "anneal": {"t0": None, "cooling": 0.995, "sweeps": 2000, "proposals": None},
    "dataset": {"mu": 14, "split": 0.7, "normalization": "zscore", "stride": 1},
    "train": {"batch_size": 6, "epochs": 350, "lr": 0.008, "lr_drop": 0.99, "lr_drop_every": 12,
              "dropout": 0.25, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "hidden": 128, "layers": 3},
    "eval": {"scope": "all"},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in out:
            raise ConfigError(f"unknown config key {k!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {k!r} must be an object")
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(overrides: dict | None = None, seed: int | None = None) -> dict:
    """Defaults overlaid with ``overrides``; validated by building every component."""
    cfg = _merge(DEFAULTS, overrides)
    if seed is not None:
        cfg["seed"] = int(seed)
    try:
        grid = GridSpec(**cfg["grid"])
        MaterialParams(**cfg["material"])
        LaserParams.from_cells(grid, cfg["laser"]["power"], cfg["laser"]["omega_cells"])
        AnnealSchedule(**cfg["anneal"])
        TrainConfig(**cfg["train"])
        ds = cfg["dataset"]
        if not 0 < ds["split"] <= 1 or ds["mu"] < 1 or ds["stride"] < 1:
            raise ValueError("dataset: need 0 < split <= 1, mu >= 1, stride >= 1")
        if cfg["stops_per_side"] < 2 or cfg["substeps"] < 1:
            raise ValueError("stops_per_side must be >= 2 and substeps >= 1")
        if cfg["eval"]["scope"] not in ("all", "holdout"):
            raise ValueError("eval.scope must be 'all' or 'holdout'")
        if cfg["stops_per_side"] ** 2 <= ds["mu"]:
            raise ValueError("fewer moves than mu + 1")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None, seed=None) -> dict:
    over = None
    if path is not None:
        try:
            over = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return resolve_config(over, seed)


def stage_seeds(cfg) -> dict:
    anneal, train_seed = np.random.SeedSequence(cfg["seed"]).generate_state(2)
    return {"anneal": int(anneal), "train": int(train_seed)}


def _components(cfg):
    grid = GridSpec(**cfg["grid"])
    material = MaterialParams(**cfg["material"])
    laser = LaserParams.from_cells(grid, cfg["laser"]["power"], cfg["laser"]["omega_cells"])
    return grid, material, laser


def _stage_record(out: Path, cfg: dict, stage: str, extra: dict | None = None):
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "stage.json":
            files[p.relative_to(out).as_posix()] = storage.file_digest(p)
    rec = {"stage": stage, "config_hash": storage.config_hash(cfg), "files": files}
    if extra:
        rec.update(extra)
    storage.write_json(out / "stage.json", rec)


def _require(path: Path, what: str):
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def simulate(cfg: dict, out, tour_file=None, name=None) -> Path:
    """Simulate a raster run into ``prior/`` or a tour-file run into ``run/``."""
    out = Path(out)
    grid, material, laser = _components(cfg)
    m = cfg["stops_per_side"]
    if tour_file is None:
        order, source = raster_tour(m), "raster"
    else:
        order = validate_tour(storage.read_tour(_require(Path(tour_file), "tour file")), m * m)
        source = "tour-file"
    name = name or ("prior" if tour_file is None else "run")
    run = simulate_tour(order, grid, material, laser, stop_positions(m), cfg["tau"], cfg["substeps"],
                        cfg["theta0"], cfg["u0"])
    J = objective_J(run, cfg["features"]["u_g"])
    if not np.isfinite(J):
        raise FloatingPointError("objective is not finite")
    dest = out / name
    storage.save_run(run, dest, {"config_hash": storage.config_hash(cfg), "source": source, "objective_J": J})
    _stage_record(dest, cfg, "simulate", {"objective_J": J})
    return dest


def _stop_costs(run, cfg):
    part = SubdomainPartition(run.grid)
    f = cfg["features"]
    s = np.zeros(len(run.stops))
    for snap in run.snapshots:
        st = subdomain_stats([snap], part, literal_lambda=f["literal_lambda"])
        s[snap.stop] = stop_cost(st, f["u_g"], f["norm"])
    return s


def tour(cfg: dict, out) -> Path:
    out = Path(out)
    prior = storage.load_run(_require(out / "prior" / "manifest.json", "prior run").parent)
    s = _stop_costs(prior, cfg)
    pm = build_penalty_matrix(s, provenance="prior")
    m = cfg["stops_per_side"]
    init = raster_tour(m)
    sched = AnnealSchedule(**cfg["anneal"], seed=stage_seeds(cfg)["anneal"])
    res = simulated_annealing(pm, sched, init)
    dest = out / "tour"
    dest.mkdir(parents=True, exist_ok=True)
    storage.write_table(dest / "stop_costs.csv", pm.costs[:, None], "stop_index", "cost", start=0)
    storage.write_matrix(dest / "penalty_matrix.csv", pm)
    storage.write_tour(dest / "tour.csv", res.tour)
    bound = line_metric_optimum(pm.costs)
    summary = {
        "config_hash": storage.config_hash(cfg),
        "raster_cost": tour_cost(init, pm),
        "final_cost": res.cost,
        "lower_bound": bound,
        "gap": (res.cost - bound) / bound if bound > 0 else 0.0,
        "anneal": sched.to_dict(),
    }
    storage.write_json(dest / "summary.json", summary)
    _stage_record(dest, cfg, "tour")
    return dest


def build_dataset(cfg: dict, out) -> Path:
    out = Path(out)
    run = storage.load_run(_require(out / "run" / "manifest.json", "tour-driven run").parent)
    part = SubdomainPartition(run.grid)
    f, ds = cfg["features"], cfg["dataset"]
    feats, lams = [], []
    for snap in run.snapshots:
        st = subdomain_stats([snap], part, literal_lambda=f["literal_lambda"])
        sq = np.sum(st.psi**2, axis=1)
        feats.append(sq if f["scalar"] == "squared" else np.sqrt(sq))
        lams.append(st.lam)
    series = FeatureSeries(np.array(feats), ds["mu"])
    if series.num_maps < ds["mu"] + 1:
        raise ConfigError(f"run has {series.num_maps} maps; need at least {ds['mu'] + 1}")
    _, norm = normalize(series, ds["normalization"], ds["split"])
    dest = out / "dataset"
    dest.mkdir(parents=True, exist_ok=True)
    storage.write_table(dest / "features.csv", series.table)
    storage.write_table(dest / "lambda.csv", np.array(lams))
    storage.write_json(dest / "manifest.json", {
        "config_hash": storage.config_hash(cfg),
        "mu": ds["mu"],
        "split": ds["split"],
        "normalization": norm.to_dict(),
        "num_maps": series.num_maps,
        "ordering": "row-major over (axis-0 block, axis-1 block); subdomain_k is block k-1",
        "feature": f["scalar"],
    })
    _stage_record(dest, cfg, "dataset")
    return dest


def _load_dataset(out: Path):
    d = out / "dataset"
    man = json.loads(_require(d / "manifest.json", "dataset").read_text())
    series = FeatureSeries(storage.read_table(d / "features.csv"), man["mu"])
    return series, NormStats(**man["normalization"]), man


def fit(cfg: dict, out, progress=None) -> Path:
    out = Path(out)
    series, norm, man = _load_dataset(out)
    ds = cfg["dataset"]
    normed = FeatureSeries(norm.apply(series.table), series.mu)
    win = window(normed, ds["mu"], ds["split"], ds["stride"])
    tc = TrainConfig(**cfg["train"], seed=stage_seeds(cfg)["train"])
    model, history = train(win, tc, progress=progress)
    model.norm = norm
    dest = out / "model"
    save_model(model, dest, {"config_hash": storage.config_hash(cfg), "train": tc.to_dict(),
                             "windows": len(win), "window_length": win.inputs.shape[1]})
    with open(dest / "loss_history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "half_mse"])
        for k, v in enumerate(history):
            w.writerow([k + 1, repr(float(v))])
    _stage_record(dest, cfg, "train", {"final_loss": float(history[-1])})
    return dest


def _eval_maps(series, cfg, scope):
    win = window(series, cfg["dataset"]["mu"], cfg["dataset"]["split"], scope=scope)
    return win.eval_maps


def predict(cfg: dict, out, scope=None) -> Path:
    out = Path(out)
    model = load_model(_require(out / "model" / "manifest.json", "trained model").parent)
    series, norm, _ = _load_dataset(out)
    scope = scope or cfg["eval"]["scope"]
    maps = _eval_maps(series, cfg, scope)
    hist = np.stack([series.history(z) for z in maps])
    preds = forecast(model, hist, steps=series.width, nu=series.nu, norm=norm)
    if not np.all(np.isfinite(preds)):
        raise FloatingPointError("non-finite forecast")
    dest = out / "predict"
    dest.mkdir(parents=True, exist_ok=True)
    with open(dest / "forecasts.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["move"] + [f"subdomain_{l + 1}" for l in range(series.width)])
        for z, row in zip(maps, preds):
            w.writerow([z] + [repr(float(v)) for v in row])
    storage.write_json(dest / "manifest.json", {"config_hash": storage.config_hash(cfg), "scope": scope,
                                                "first_map": maps[0], "last_map": maps[-1]})
    _stage_record(dest, cfg, "predict")
    return dest


def evaluate(cfg: dict, out, scope=None) -> Path:
    out = Path(out)
    fc = _require(out / "predict" / "forecasts.csv", "forecasts")
    _require(out / "model" / "manifest.json", "trained model")
    series, norm, _ = _load_dataset(out)
    with open(fc, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    preds = {int(r[0]): np.array([float(v) for v in r[1:]]) for r in rows}
    scope = scope or cfg["eval"]["scope"]
    wanted = set(_eval_maps(series, cfg, scope))
    preds = {k: v for k, v in preds.items() if k in wanted}
    if not preds:
        raise FileNotFoundError(f"no forecasts cover the '{scope}' evaluation scope")
    normed = FeatureSeries(norm.apply(series.table), series.mu)
    npreds = {k: norm.apply(v) for k, v in preds.items()}
    curve_n = rmse_curve(npreds, normed, "normalized")
    curve_p = rmse_curve(preds, series, "physical")
    base_n = persistence_curve(normed, curve_n.maps, "normalized")
    base_p = persistence_curve(series, curve_p.maps, "physical")
    rep_n, rep_p = percentiles(curve_n), percentiles(curve_p)
    h = storage.config_hash(cfg)
    dest = out / "eval"
    dest.mkdir(parents=True, exist_ok=True)
    with open(dest / "rmse_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["move", "rmse_normalized", "rmse_physical", "baseline_normalized", "baseline_physical"])
        for k in range(len(curve_n)):
            w.writerow([int(curve_n.maps[k]), repr(float(curve_n.values[k])), repr(float(curve_p.values[k])),
                        repr(float(base_n.values[k])), repr(float(base_p.values[k]))])
    summary = {
        "config_hash": h,
        "scope": scope,
        "first_map": int(curve_n.maps[0]),
        "num_maps": len(curve_n),
        "normalized": rep_n.to_dict(),
        "physical": rep_p.to_dict(),
    }
    storage.write_json(dest / "percentiles.json", summary)
    baseline = {
        "config_hash": h,
        "median_rmse_normalized": float(np.median(curve_n.values)),
        "median_baseline_normalized": float(np.median(base_n.values)),
        "median_rmse_physical": float(np.median(curve_p.values)),
        "median_baseline_physical": float(np.median(base_p.values)),
    }
    baseline["lstm_beats_baseline"] = baseline["median_rmse_normalized"] < baseline["median_baseline_normalized"]
    storage.write_json(dest / "baseline.json", baseline)
    (dest / "rmse_curve.svg").write_text(curve_svg(curve_n, rep_n, base_n, comment=f"config_hash={h}"))
    for p, z, r in zip(rep_n.levels, rep_n.maps, rep_n.rmse):
        svg = exemplar_svg(normed, z, npreds[z], r, comment=f"config_hash={h}")
        (dest / f"exemplar_p{p}.svg").write_text(svg)
    _stage_record(dest, cfg, "evaluate")
    return dest


def run_all(cfg: dict, out, scope=None, progress=None) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_json(out / "config.json", cfg)
    simulate(cfg, out)
    tour(cfg, out)
    simulate(cfg, out, tour_file=out / "tour" / "tour.csv")
    build_dataset(cfg, out)
    fit(cfg, out, progress)
    predict(cfg, out, scope)
    evaluate(cfg, out, scope)
    summary = {
        "config_hash": storage.config_hash(cfg),
        "objective_J_raster": json.loads((out / "prior" / "manifest.json").read_text())["objective_J"],
        "objective_J_tour": json.loads((out / "run" / "manifest.json").read_text())["objective_J"],
        "tour": json.loads((out / "tour" / "summary.json").read_text()),
        "baseline": json.loads((out / "eval" / "baseline.json").read_text()),
        "percentiles": json.loads((out / "eval" / "percentiles.json").read_text()),
    }
    storage.write_json(out / "summary.json", summary)
    return summary
