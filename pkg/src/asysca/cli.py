"""Command-line front end.

Subcommands:

* ``run``       -- Monte Carlo evaluation of the configured precoder
                   designs; writes per-series CSVs, aggregate.csv, manifest.
* ``sweep``     -- repeats ``run`` for a list of channel perturbation
                   levels; writes sweep.csv and a manifest.
* ``quadratic`` -- synthetic rate benchmark; writes quadratic.csv.
* ``check``     -- numerical correctness suite; exit 0 iff all pass.

Log verbosity is controlled by the ASYSCA_LOG_LEVEL environment variable
(DEBUG, INFO, WARNING, ERROR; default WARNING).
"""

import argparse
import logging
import os
import sys

from . import experiment
from .checks import report, run_all_checks
from .problem import NumericError

log = logging.getLogger("asysca")


def _setup_logging():
    level = os.environ.get("ASYSCA_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _exclusion_exit(excluded, total):
    if excluded == 0:
        return 0
    frac = excluded / total
    if frac < 0.05:
        log.warning("%d of %d runs excluded for solver failures", excluded, total)
        return 0
    print(
        f"error: {excluded} of {total} runs excluded ({frac:.0%} >= 5%)",
        file=sys.stderr,
    )
    return 3


def cmd_run(args):
    cfg = experiment.ExperimentConfig.from_ini(args.config)
    try:
        result = experiment.run_experiment(cfg)
    except ValueError as exc:
        print(f"error: infeasible configuration: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    experiment.emit_run_outputs(result, args.out)
    print(f"wrote {len(result.series)} series over {result.n_kept} runs to {args.out}")
    return _exclusion_exit(len(result.excluded), cfg.monte_carlo_runs)


def cmd_sweep(args):
    cfg = experiment.ExperimentConfig.from_ini(args.config)
    stds = [float(s) for s in args.std.split(",") if s.strip()]
    if not stds:
        print("error: empty --std list", file=sys.stderr)
        return 2
    try:
        rows, excluded, total = experiment.run_sweep(cfg, stds)
    except ValueError as exc:
        print(f"error: infeasible configuration: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    os.makedirs(args.out, exist_ok=True)
    experiment.write_sweep_csv(os.path.join(args.out, "sweep.csv"), rows)
    experiment.write_manifest(
        os.path.join(args.out, "manifest.json"), cfg,
        extra={"sweep_std": stds, "runs_excluded": excluded},
    )
    print(f"wrote sweep over {len(stds)} perturbation levels to {args.out}")
    return _exclusion_exit(excluded, total)


def cmd_quadratic(args):
    rows, means, slope = experiment.quadratic_benchmark(seeds=args.seeds)
    os.makedirs(args.out, exist_ok=True)
    experiment.write_quadratic_csv(
        os.path.join(args.out, "quadratic.csv"), rows, means, slope
    )
    print(f"log-log slope of min stationarity residual vs horizon: {slope:.3f}")
    return 0


def cmd_check(args):
    return report(run_all_checks())


def build_parser():
    parser = argparse.ArgumentParser(
        prog="asysca",
        description="Asynchronous stochastic SCA experiments and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Monte Carlo precoder comparison")
    p_run.add_argument("--config", required=True, help="INI configuration file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep over channel perturbation levels")
    p_sweep.add_argument("--config", required=True, help="INI configuration file")
    p_sweep.add_argument(
        "--std", required=True,
        help="comma-separated perturbation levels, e.g. 0.01,0.05,0.1,0.15",
    )
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.set_defaults(func=cmd_sweep)

    p_quad = sub.add_parser("quadratic", help="synthetic convergence-rate benchmark")
    p_quad.add_argument("--out", required=True, help="output directory")
    p_quad.add_argument("--seeds", type=int, default=20, help="seeds per horizon")
    p_quad.set_defaults(func=cmd_quadratic)

    p_check = sub.add_parser("check", help="numerical correctness suite")
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
