"""Command-line entry point: ``fedhet run | cost | partition-check``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import commcost
from .config import load_config
from .errors import FedHetError
from .harness import parse_range, partition_check, partition_check_csv, run

LOG_ENV = "FEDHET_LOG_LEVEL"


def _cmd_run(args) -> int:
    config = load_config(args.config)
    result = run(config, args.out)
    for r in result.summary():
        print(f"{r.entity:>8} {r.metric:<28} {r.value:.6g}")
    return 0


def _cmd_cost(args) -> int:
    classes = parse_range(args.sweep_classes) if args.sweep_classes else [args.mask]
    rows = commcost.cost_sweep(classes, args.xdist, args.logit_width, args.conf, args.params,
                               args.rounds, args.clients)
    if args.sci:
        rows = [(k,) + tuple(f"{v:.2E}" for v in rest) for k, *rest in rows]
    sys.stdout.write(commcost.sweep_csv(rows))
    return 0


def _cmd_partition_check(args) -> int:
    rows = partition_check(args.scheme, args.clients, args.classes, args.seed, args.draws)
    sys.stdout.write(partition_check_csv(rows, args.classes))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedhet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("cost", help="communication cost table (scalars transferred)")
    p.add_argument("--xdist", type=int, default=0, help="distillation set size")
    p.add_argument("--logit-width", type=int, default=0, help="full label-space width (DL-SH)")
    p.add_argument("--conf", type=int, default=0, help="confidence entries per client")
    p.add_argument("--mask", type=int, default=0, help="classes held per client (DL-MH width and mask size)")
    p.add_argument("--params", type=int, default=0, help="model parameter count (FedAvg)")
    p.add_argument("--rounds", type=int, default=0, help="FedAvg communication rounds")
    p.add_argument("--clients", type=int, default=1)
    p.add_argument("--sweep-classes", default="", help="class counts, e.g. 1..100")
    p.add_argument("--sci", action="store_true", help="print costs as 1.83E+08 style")
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("partition-check", help="class-probability vectors and sampled frequencies")
    p.add_argument("--scheme", required=True, choices=("IID", "NIID1", "NIID2", "NIID3"))
    p.add_argument("--clients", type=int, default=5)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=100_000)
    p.set_defaults(func=_cmd_partition_check)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FedHetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
