"""Command-line entry point: ``lpbf-forecast <stage> [options]``.

Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import pipeline, storage
from .lstm import TrainingDiverged

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("lpbf_forecast")


def _parser():
    ap = argparse.ArgumentParser(prog="lpbf-forecast", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config (missing keys take defaults)")
    common.add_argument("--out", type=Path, default=Path("out"), help="artifact directory")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--threads", type=int, default=1,
                        help="BLAS threads; >1 gives up bit-for-bit reproducibility")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("init", parents=[common], help="write a config file with every default")
    p.add_argument("path", type=Path, nargs="?", default=Path("config.json"))
    p = sub.add_parser("simulate", parents=[common], help="simulate a raster or tour-file run")
    p.add_argument("--tour-file", type=Path)
    sub.add_parser("tour", parents=[common], help="price stops on the prior run and anneal a tour")
    sub.add_parser("dataset", parents=[common], help="extract gradient features from run/")
    sub.add_parser("train", parents=[common], help="fit the LSTM")
    for name in ("predict", "evaluate", "pipeline"):
        p = sub.add_parser(name, parents=[common], help=f"{name} stage" if name != "pipeline" else "all stages")
        p.add_argument("--eval-scope", choices=("all", "holdout"))
    return ap


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = pipeline.load_config(args.config, args.seed)
        if args.command == "init":
            storage.write_json(args.path, cfg)
            print(f"wrote {args.path}")
            return EXIT_OK
        args.out.mkdir(parents=True, exist_ok=True)
        scope = getattr(args, "eval_scope", None)
        progress = None
        if args.verbose:
            def progress(epoch, loss):
                log.info("epoch %d loss %.6g", epoch + 1, loss)
        with threadpool_limits(limits=max(1, args.threads)):
            if args.command == "simulate":
                print(pipeline.simulate(cfg, args.out, args.tour_file))
            elif args.command == "tour":
                print(pipeline.tour(cfg, args.out))
            elif args.command == "dataset":
                print(pipeline.build_dataset(cfg, args.out))
            elif args.command == "train":
                print(pipeline.fit(cfg, args.out, progress))
            elif args.command == "predict":
                print(pipeline.predict(cfg, args.out, scope))
            elif args.command == "evaluate":
                print(pipeline.evaluate(cfg, args.out, scope))
            elif args.command == "pipeline":
                summary = pipeline.run_all(cfg, args.out, scope, progress)
                b = summary["baseline"]
                print(f"median RMSE (normalized): lstm={b['median_rmse_normalized']:.4g} "
                      f"persistence={b['median_baseline_normalized']:.4g}")
    except pipeline.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PermissionError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
