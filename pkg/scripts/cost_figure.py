"""Writes the communication-cost sweep over held-class counts as CSV, optionally plotting it.

    python scripts/cost_figure.py --out cost_sweep.csv [--plot cost_sweep.png]
"""
import argparse
from pathlib import Path

from fedhet.commcost import cost_sweep, sweep_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="cost_sweep.csv")
    ap.add_argument("--plot", help="PNG path; needs matplotlib")
    ap.add_argument("--max-classes", type=int, default=100)
    ap.add_argument("--xdist", type=int, default=40_000)
    ap.add_argument("--params", type=int, default=9_146_954)
    args = ap.parse_args()

    rows = cost_sweep(range(1, args.max_classes + 1), args.xdist, 10, args.xdist, args.params, 10, 1)
    Path(args.out).write_text(sweep_csv(rows))
    print(f"wrote {len(rows)} rows to {args.out}")
    if args.plot:
        import matplotlib.pyplot as plt  # optional, not a package dependency

        k = [r[0] for r in rows]
        for col, name in zip(range(1, 4), ("FedAvg", "DL-SH", "DL-MH")):
            plt.semilogy(k, [r[col] for r in rows], label=name)
        plt.xlabel("classes held per client")
        plt.ylabel("scalars transmitted")
        plt.legend()
        plt.savefig(args.plot, dpi=150)


if __name__ == "__main__":
    main()
