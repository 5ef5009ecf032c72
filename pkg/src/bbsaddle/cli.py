"""Command-line entry point.

Subcommands
-----------
run             run one experiment cell over several seeds
variance-trace  write the sampled-point std trace of a quadratic run
robust-mpc      run BSP on the ARIMA-MPC game and compare with a nominal MPC
schema          print the summary JSON schema

Exit status is 0 on success, 2 on a configuration error and 3 when a
numerical error aborted any seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bsp import Variant
from .harness import (
    METHODS,
    REGIMES,
    SUMMARY_SCHEMA,
    ConfigError,
    ExperimentConfig,
    derive_seeds,
    dump_summary,
    robust_mpc_eval,
    run_experiment,
    run_seed,
    variance_trace,
    _atomic_write,
)
from .objectives import OBJECTIVE_IDS

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _common(p):
    p.add_argument("--problem", choices=OBJECTIVE_IDS)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--regime", choices=REGIMES)
    p.add_argument("--seeds", type=int)
    p.add_argument("--experiment-seed", dest="experiment_seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--max-evals", dest="max_evals", type=int)
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--out", help="output directory (default: $BBSADDLE_OUT or ./runs)")


def build_parser():
    parser = argparse.ArgumentParser(prog="bbsaddle", description="Black-box saddle-point experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run one experiment cell"))
    vt = sub.add_parser("variance-trace", help="std at sampled points on the quadratic family")
    _common(vt)
    rm = sub.add_parser("robust-mpc", help="robust vs nominal MPC comparison")
    _common(rm)
    rm.add_argument("--n-series", dest="n_series", type=int, default=500)
    rm.add_argument("--grid", type=int, default=41)
    sub.add_parser("schema", help="print the summary JSON schema")
    return parser


def _config(args, **forced):
    keys = ("problem", "method", "variant", "regime", "seeds", "experiment_seed",
            "workers", "eps", "beta", "max_evals", "out")
    overrides = {k: getattr(args, k) for k in keys}
    overrides.update(forced)
    if args.config:
        return ExperimentConfig.from_json(args.config, **overrides)
    return ExperimentConfig.from_dict({}, **overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(SUMMARY_SCHEMA, indent=2, sort_keys=True))
        return EXIT_OK
    try:
        if args.command == "run":
            cfg = _config(args)
            summary, _ = run_experiment(cfg)
            print(f"{cfg.problem} {cfg.method} {cfg.variant} {cfg.regime}: "
                  f"success {summary['success_rate']:.1f}% over {cfg.seeds} seeds, "
                  f"{summary['newton_steps_total']} Newton steps -> {cfg.out_dir()}")
            errors = [s["error"] for s in summary["seeds"] if s["error"]]
            if errors:
                print(f"error: {errors[0]}", file=sys.stderr)
                return EXIT_NUMERIC
            return EXIT_OK
        if args.command == "variance-trace":
            cfg = _config(args, problem=args.problem or "quadratic")
            path = cfg.out_dir() / "variance_trace.csv"
            rows = variance_trace(cfg, out=path)
            print(f"{len(rows)} sampled points traced -> {path}")
            return EXIT_OK
        if args.command == "robust-mpc":
            cfg = _config(args, problem="arima-mpc", method="bsp")
            seed = derive_seeds(cfg.experiment_seed, 1)[0]
            rec = run_seed(cfg, seed)
            if rec.error:
                print(f"error: {rec.error}", file=sys.stderr)
                return EXIT_NUMERIC
            report = robust_mpc_eval(rec.final_point[:2], n_series=args.n_series,
                                     grid=args.grid, seed=seed)
            path = Path(cfg.out_dir()) / "robust_mpc.json"
            _atomic_write(path, dump_summary(report))
            print(f"OoD improvement {report['improvement_ood_pct']:.1f}%, "
                  f"in-distribution {report['improvement_in_pct']:.1f}% -> {path}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
