"""Command line entry point: ``mdmid run|example1|example2``."""

import argparse
import sys

from .errors import MDMError
from .experiments import ExperimentConfig, RunError, run_experiment

FULL_SCALE_MC = 10_000

_EXAMPLES = {"example1": "builtin-1", "example2": "builtin-2"}


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mc", type=int, help="number of Monte-Carlo runs")
    common.add_argument("--tau", type=int, help="horizon (number of transitions)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--methods", help="comma separated, e.g. uw-nr,sw-nr,we-nr")
    common.add_argument("--out", help="output directory for the CSV artifacts")
    common.add_argument("--full-scale", action="store_true", help=f"use {FULL_SCALE_MC} runs")
    common.add_argument("--project-psd", action="store_true", help="clip negative eigenvalues")
    common.add_argument("--backend", choices=["numba", "numpy"])
    common.add_argument(
        "--no-timing", action="store_true",
        help="leave time_rel empty so results.csv is reproducible byte for byte",
    )

    p = argparse.ArgumentParser(prog="mdmid", description="Noise covariance identification.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run an experiment from a JSON config")
    run.add_argument("--config", required=True, metavar="PATH")
    sub.add_parser("example1", parents=[common], help="scalar time-varying model")
    sub.add_parser("example2", parents=[common], help="regime-switching model")
    return p


def _config(args):
    if args.command == "run":
        cfg = ExperimentConfig.from_file(args.config)
        fields = vars(cfg).copy()
    else:
        fields = {"model": _EXAMPLES[args.command]}
    for name in ("mc", "tau", "seed", "out", "backend"):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    if args.methods:
        fields["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.full_scale:
        fields["mc"] = FULL_SCALE_MC
    if args.project_psd:
        fields["project_psd"] = True
    if args.no_timing:
        fields["record_timing"] = False
    return ExperimentConfig(**fields)


def _print_table(table, out):
    rel = table.relative_times()
    print(f"{'method':8s} {'param':8s} {'true':>8s} {'s_mean':>9s} {'s_cov':>10s} {'est_cov':>10s}", file=out)
    for row in table.rows():
        print(
            f"{row['method']:8s} {row['parameter']:8s} {row['true']:8.3f} {row['s_mean']:9.4f}"
            f" {row['s_cov']:10.5f} {row['est_cov']:10.5f}",
            file=out,
        )
    if table.record_timing:
        print("relative time: " + ", ".join(f"{m} {t:.2f}" for m, t in rel.items()), file=out)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        config = _config(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"mdmid: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        table = run_experiment(config)
    except RunError as exc:
        run = exc.run if exc.run >= 0 else "none (model setup)"
        k = exc.k if exc.k is not None else "unknown"
        print(f"mdmid: failed in module {exc.module}, MC index {run}, time index {k}: "
              f"{exc.__cause__ or exc}", file=sys.stderr)
        return 1
    except MDMError as exc:
        print(f"mdmid: failed in module {exc.module}, MC index unknown, time index unknown: {exc}",
              file=sys.stderr)
        return 1
    _print_table(table, sys.stdout)
    if config.out:
        print(f"artifacts written to {config.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
