"""``istbench``: benchmark and audit front end."""

import argparse
import csv
import json
import sys

from .bench import run_benchmark
from .oracle import differential_run
from .workload import DISTRIBUTIONS, WorkloadSpec

PRETTY_COLUMNS = ("trial", "threads", "total_ops", "throughput_ops_per_us",
                  "avg_leaf_depth", "max_leaf_depth", "overhead_ratio",
                  "root_rebuilds", "ok")


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="istbench",
        description="Benchmark and audit the concurrent interpolation "
                    "search tree.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="prefill a tree and measure throughput")
    run.add_argument("--size", type=int, default=100_000)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--update-ratio", type=float, default=0.2,
                     help="fraction of ops that update, split evenly "
                          "between insert and delete")
    run.add_argument("--duration", type=_positive_float, default=1.0,
                     help="measured seconds per trial")
    run.add_argument("--ops", type=int, default=None,
                     help="fixed op count per thread instead of --duration")
    run.add_argument("--warmup", type=float, default=0.0)
    run.add_argument("--dist", choices=DISTRIBUTIONS, default="uniform")
    run.add_argument("--theta", type=float, default=0.5)
    run.add_argument("--key-range", type=int, default=None,
                     help="keys are drawn from [0, K); default 2 * size")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--collaborative", action=argparse.BooleanOptionalAction,
                     default=True)
    run.add_argument("--leaf-capacity", type=int, default=0, metavar="N",
                     help="store up to N pairs per leaf array (0: one node "
                          "per key)")
    run.add_argument("--csv", metavar="PATH")
    run.add_argument("--pretty", action="store_true",
                     help="also print a human-readable table to stderr")
    run.add_argument("--pin", action="store_true",
                     help="pin worker threads to CPUs (best effort)")
    run.set_defaults(handler=cmd_run, subparser=run)

    audit = sub.add_parser(
        "audit", help="replay a seeded op stream against the oracle")
    audit.add_argument("--seed", type=int, default=0)
    audit.add_argument("--ops", type=int, default=100_000)
    audit.add_argument("--key-range", type=int, default=1024)
    audit.set_defaults(handler=cmd_audit, subparser=audit)
    return parser


def _spec_from(args):
    return WorkloadSpec(
        size=args.size, threads=args.threads, update_ratio=args.update_ratio,
        duration=args.duration, dist=args.dist, theta=args.theta,
        key_range=args.key_range, seed=args.seed, trials=args.trials,
        collaborative=args.collaborative, warmup=args.warmup, ops=args.ops,
        pin=args.pin, leaf_capacity=args.leaf_capacity)


def _print_table(rows, out):
    widths = [max(len(c), *(len(_fmt(r[c])) for r in rows))
              for c in PRETTY_COLUMNS]
    out.write("  ".join(c.ljust(w) for c, w in zip(PRETTY_COLUMNS, widths))
              + "\n")
    for r in rows:
        out.write("  ".join(_fmt(r[c]).ljust(w)
                            for c, w in zip(PRETTY_COLUMNS, widths)) + "\n")


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def cmd_run(args, parser):
    spec = _spec_from(args)
    try:
        spec.validate()
    except ValueError as exc:
        parser.error(str(exc))
    reports = run_benchmark(spec)
    rows = [r.to_dict() for r in reports]
    for row in rows:
        print(json.dumps(row), flush=True)
    if args.csv:
        fields = [k for k in rows[0] if k != "problems"]
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields,
                                    extrasaction="ignore")
            writer.writeheader()
            writer.writerows(rows)
    if args.pretty:
        _print_table(rows, sys.stderr)
    return 0 if all(r.ok for r in reports) else 1


def cmd_audit(args, parser):
    if args.ops < 0 or args.key_range < 1:
        parser.error("--ops must be >= 0 and --key-range >= 1")
    report = differential_run(args.seed, args.ops, args.key_range)
    print(json.dumps(report.to_dict(), default=str))
    return 0 if report.passed else 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.handler(args, args.subparser)


if __name__ == "__main__":
    sys.exit(main())
