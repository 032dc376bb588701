"""Command line entry point: ``fedda run`` and ``fedda verify``."""

import argparse
import logging
import os
import sys

from fedda.config import ConfigError, apply_overrides, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _run(args):
    from fedda.federation.runner import final_mean, run_training

    try:
        cfg = load_config(args.config)
        extra = list(args.override or [])
        if args.trace_clients:
            extra.append("run.trace_clients=true")
        if args.seed is not None:
            extra.append(f"run.seed={args.seed}")
        cfg = apply_overrides(cfg, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = args.out or cfg.output.dir
    try:
        result = run_training(cfg, out_dir=out_dir)
    except Exception as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        print(f"partial output and error record in {out_dir}", file=sys.stderr)
        return EXIT_FAIL
    table = result.table
    print(f"{cfg.variant_name()}: {len(table)} rows -> {os.path.join(out_dir, cfg.output.csv)}")
    if len(table):
        print(f"final loss {result.problem.loss(result.x):.6g}")
        g = final_mean(table, "measure_g", 0.1)
        if g == g:
            print(f"mean measure_g over last 10% of steps {g:.6g}")
    return EXIT_OK


def _verify(args):
    from fedda.verify import run_suite

    report = run_suite(args.suite)
    for line in report.lines:
        print(line)
    print(f"{report.name}: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="fedda", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a TOML config")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--override", action="append", metavar="KEY=VALUE",
                     help="section.key=value, repeatable (values use TOML syntax)")
    run.add_argument("--out", help="output directory (default: output.dir from the config)")
    run.add_argument("--trace-clients", action="store_true", help="record full per-client traces")
    run.add_argument("--seed", type=int, help="override run.seed")
    run.set_defaults(func=_run)

    from fedda.verify import SUITES

    verify = sub.add_parser("verify", help="run a self-check suite")
    verify.add_argument("suite", choices=SUITES)
    verify.set_defaults(func=_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
