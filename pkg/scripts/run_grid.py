"""Multi-seed grid over protocols and partition schemes; prints a table of mean accuracies.

    python scripts/run_grid.py --config configs/desk_niid1_dlsh.ini --seeds 3
"""
import argparse

import numpy as np

from fedhet import load_config
from fedhet.harness import run_protocol

SCHEMES = ("IID", "NIID1", "NIID2", "NIID3")
PROTOCOLS = ("dlsh", "dlmh", "idlmh", "fedavg")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--schemes", nargs="+", default=list(SCHEMES))
    ap.add_argument("--protocols", nargs="+", default=list(PROTOCOLS))
    args = ap.parse_args()

    base = load_config(args.config)
    print(f"{'protocol':<8} {'scheme':<6} {'global':>7} {'clients':>7} {'comm_cost':>12}")
    for protocol in args.protocols:
        for scheme in args.schemes:
            rows = []
            for seed in range(args.seeds):
                cfg = base.with_(experiment={"protocol": protocol, "master_seed": seed}, scheme={"kind": scheme})
                r = run_protocol(cfg)
                clients = r.value("clients_avg_accuracy", "clients", "summary") if protocol != "fedavg" else np.nan
                rows.append((r.value("accuracy", "global", "summary"), clients,
                             r.value("comm_cost", "global", "summary")))
            g, c, cost = np.mean(rows, axis=0)
            print(f"{protocol:<8} {scheme:<6} {g:7.3f} {c:7.3f} {cost:12.0f}")


if __name__ == "__main__":
    main()
