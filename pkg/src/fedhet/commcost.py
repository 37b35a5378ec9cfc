"""Communication cost formulas, counted in scalars transferred.

All functions take nonnegative integer operands and return an exact ``int``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .errors import InputError

SWEEP_HEADER = ("classes", "fedavg", "dlsh", "dlmh")


def _check(**operands: int) -> None:
    for name, v in operands.items():
        if int(v) != v or v < 0:
            raise InputError(f"{name} must be a nonnegative integer, got {v!r}")


def cost_generic(hidden_features: int, logits_server: int, logits_client: int,
                 dataset_size: int, rounds: int, M: int) -> int:
    """Feature/logit exchange scheme: (h + ls + lc) * dataset_size * rounds * M."""
    _check(hidden_features=hidden_features, logits_server=logits_server, logits_client=logits_client,
           dataset_size=dataset_size, rounds=rounds, M=M)
    return int((hidden_features + logits_server + logits_client) * dataset_size * rounds * M)


def cost_fedavg(model_params_server: int, model_params_client: int, rounds: int, M: int) -> int:
    _check(model_params_server=model_params_server, model_params_client=model_params_client,
           rounds=rounds, M=M)
    return int((model_params_server + model_params_client) * rounds * M)


def cost_dlsh(x_dist_size: int, logit_width: int, conf_size: int, M: int) -> int:
    _check(x_dist_size=x_dist_size, logit_width=logit_width, conf_size=conf_size, M=M)
    return int((x_dist_size * logit_width + conf_size) * M)


def cost_dlmh(x_dist_size: int, logit_width: int, conf_size: int, mask_size: int, M: int) -> int:
    _check(x_dist_size=x_dist_size, logit_width=logit_width, conf_size=conf_size,
           mask_size=mask_size, M=M)
    return int((x_dist_size * logit_width + conf_size + mask_size) * M)


def cost_idlmh_incremental(x_dist_size: int, client_logit_width: int, M: int) -> int:
    """Downlink-only incentive traffic: no confidence and no mask travel."""
    _check(x_dist_size=x_dist_size, client_logit_width=client_logit_width, M=M)
    return int(x_dist_size * client_logit_width * M)


@dataclass(frozen=True)
class CommCostReport:
    protocol: str
    total: int
    operands: dict[str, int] = field(default_factory=dict)

    def recompute(self) -> int:
        o = self.operands
        if self.protocol == "fedavg":
            return cost_fedavg(o["model_params_server"], o["model_params_client"], o["rounds"], o["n_clients"])
        if self.protocol == "dlsh":
            return cost_dlsh(o["x_dist_size"], o["logit_width"], o["conf_size"], o["n_clients"])
        if self.protocol == "dlmh":
            return cost_dlmh(o["x_dist_size"], o["logit_width"], o["conf_size"], o["mask_size"], o["n_clients"])
        if self.protocol == "idlmh":
            return cost_idlmh_incremental(o["x_dist_size"], o["logit_width"], o["n_clients"])
        if self.protocol == "generic":
            return cost_generic(o["hidden_features"], o["logits_server"], o["logits_client"],
                                o["x_dist_size"], o["rounds"], o["n_clients"])
        raise InputError(f"unknown protocol {self.protocol!r}")


def report(protocol: str, **operands: int) -> CommCostReport:
    r = CommCostReport(protocol, 0, dict(operands))
    return CommCostReport(protocol, r.recompute(), dict(operands))


def cost_sweep(class_counts, x_dist_size: int, logit_width: int, conf_size: int,
               model_params: int, rounds: int, M: int) -> list[tuple[int, int, int, int]]:
    """Rows ``(classes, fedavg, dlsh, dlmh)``.

    ``logit_width`` is the full label-space width paid by DL-SH. DL-MH pays the
    per-client class count both as logit width and as mask size.
    """
    counts = list(class_counts)
    if not counts:
        raise InputError("class_counts must be non-empty")
    fedavg = cost_fedavg(model_params, model_params, rounds, M)
    dlsh = cost_dlsh(x_dist_size, logit_width, conf_size, M)
    return [(int(k), fedavg, dlsh, cost_dlmh(x_dist_size, k, conf_size, k, M)) for k in counts]


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    writer.writerows(rows)
    return buf.getvalue()
