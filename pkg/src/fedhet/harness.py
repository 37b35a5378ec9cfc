"""Dispatch a configured experiment and write its output files.

``run`` writes into the output directory:

* ``metrics.jsonl``: one JSON object per metrics record;
* ``summary.csv``: the summary-stage records (``entity,metric,value``);
* ``seeds.json``: master seed plus every derived seed, keyed by role path;
* ``config.ini``: the fully resolved configuration.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, serialize_config
from .datasets import PartitionScheme, class_probability_vector
from .dlmh import run_dlmh
from .dlsh import run_dlsh
from .fedavg import run_fedavg
from .idlmh import run_idlmh
from .metrics import RECORD_FIELDS, RunResult
from .seeding import derive_seed, rng_for

log = logging.getLogger(__name__)

RUNNERS = {"dlsh": run_dlsh, "dlmh": run_dlmh, "idlmh": run_idlmh, "fedavg": run_fedavg}


def run_protocol(config: ExperimentConfig) -> RunResult:
    log.info("running %s (master seed %d)", config.protocol, config.master_seed)
    return RUNNERS[config.protocol](config)


def metrics_lines(result: RunResult) -> str:
    return "".join(json.dumps(r.as_dict()) + "\n" for r in result.records)


def write_outputs(result: RunResult, config: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.jsonl").write_text(metrics_lines(result), encoding="utf-8")
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("protocol", "entity", "metric", "value"))
        for r in result.summary():
            writer.writerow((r.protocol, r.entity, r.metric, repr(r.value)))
    seeds = {"master_seed": result.master_seed, "derived": dict(sorted(result.seeds.items()))}
    (out / "seeds.json").write_text(json.dumps(seeds, indent=2) + "\n", encoding="utf-8")
    (out / "config.ini").write_text(serialize_config(config), encoding="utf-8")
    return out


def run(config: ExperimentConfig, out_dir) -> RunResult:
    result = run_protocol(config)
    write_outputs(result, config, out_dir)
    log.info("wrote %d records to %s", len(result.records), out_dir)
    return result


def read_metrics(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            row = json.loads(line)
            if tuple(row) != RECORD_FIELDS:
                raise ValueError(f"unexpected record fields {tuple(row)}")
            rows.append(row)
    return rows


def partition_check(kind: str, n_clients: int, n_classes: int, seed: int, draws: int = 100_000):
    """Per client: the class-probability vector and empirical class frequencies over ``draws`` draws."""
    scheme = PartitionScheme(kind, n_clients, n_classes)
    rows = []
    for i in range(n_clients):
        p = class_probability_vector(scheme, i)
        classes = rng_for(derive_seed(seed, "partition_check", i)).choice(n_classes, size=draws, p=p)
        freq = np.bincount(classes, minlength=n_classes) / draws
        rows.append((i, p, freq))
    return rows


def partition_check_csv(rows, n_classes: int) -> str:
    header = ["client", "row"] + [f"c{j}" for j in range(n_classes)]
    lines = [",".join(header)]
    for i, p, freq in rows:
        lines.append(",".join([str(i), "prob"] + [f"{v:.6f}" for v in p]))
        lines.append(",".join([str(i), "freq"] + [f"{v:.6f}" for v in freq]))
    return "\n".join(lines) + "\n"


def parse_range(text: str) -> list[int]:
    """``"a..b"`` inclusive, or a comma list."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t.strip()]

