"""Incentive step: the server hands each interested client a distillation target.

After global training the server takes its own soft logits over X_dist, moves
every row's maximum onto the nearest class the client actually holds, narrows
the row to the client's local label space and sends it down. The client
distils once on (X_dist, targets); no new features travel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import commcost
from .config import ExperimentConfig
from .dlmh import MaskDict, dlmh_round
from .dlsh import staged, finish, record_client_metrics
from .errors import InputError, InternalError
from .metrics import RunResult
from .nn import TrainConfig, TrainedModel, normalize_rows, predict_proba, soft_train
from .transcript import client_name


@dataclass(frozen=True)
class IncentivePackage:
    client_index: int
    targets: np.ndarray  # (|X_dist|, k_i), local label space

    @property
    def scalars(self) -> int:
        return self.targets.size


def transform_logits_for_client(server_logits: np.ndarray, client_classes) -> np.ndarray:
    """Zero each row except one held class, which receives the row maximum.

    The held class is the one whose value is closest to the row maximum; ties
    resolve to the lowest class index.
    """
    d = [int(c) for c in client_classes]
    logits = np.asarray(server_logits, dtype=np.float64)
    if not d:
        raise InputError("client class list is empty")
    if min(d) < 0 or max(d) >= logits.shape[1]:
        raise InputError(f"client classes {d} outside [0, {logits.shape[1]})")
    d = sorted(d)
    row_max = logits.max(axis=1)
    gaps = row_max[:, None] - logits[:, d]
    chosen = np.asarray(d)[np.argmin(gaps, axis=1)]
    out = np.zeros_like(logits)
    out[np.arange(len(out)), chosen] = row_max
    return out


def remap_to_client_space(transformed: np.ndarray, schema: MaskDict, client_index: int = 0,
                          mode: str = "soft") -> IncentivePackage:
    cols = list(schema.classes)
    outside = np.delete(transformed, cols, axis=1)
    if np.any(outside != 0):
        raise InternalError("transformed logits carry mass outside the client's classes")
    local = transformed[:, cols]
    if mode == "hard":
        local = np.eye(len(cols))[np.argmax(local, axis=1)]
    elif mode != "soft":
        raise InputError(f"unknown incentive target mode {mode!r}")
    return IncentivePackage(client_index, local)


def client_incentive_distill(client_model: TrainedModel, pkg: IncentivePackage, x_dist,
                             cfg: TrainConfig) -> TrainedModel:
    """One distillation pass (``cfg.epochs`` epochs) of the client on its package."""
    if pkg.targets.shape[1] != client_model.spec.output_dim:
        raise InputError(f"package width {pkg.targets.shape[1]} != client head {client_model.spec.output_dim}")
    features = getattr(x_dist, "features", x_dist)
    return soft_train(client_model, features, pkg.targets, cfg)


def server_targets(config: ExperimentConfig, state: dict) -> np.ndarray:
    if config.experiment.incentive_source == "aggregate":
        return normalize_rows(state["y_g"])
    return predict_proba(state["global_model"], state["prep"].x_dist.features)


def run_idlmh(config: ExperimentConfig) -> RunResult:
    result, state = dlmh_round(config)
    seeds, prep = state["seeds"], state["prep"]
    interested = config.experiment.interested_clients
    interested = set(range(len(state["clients"]))) if interested is None else set(interested)
    source = server_targets(config, state)
    n = len(prep.x_dist)
    incentive_cost = 0
    post_models = {}
    for s, upload in zip(state["clients"], state["uploads"]):
        if s.index not in interested:
            result.add("incentive", s.index, "incentive_scalars", 0)
            continue
        transformed = staged(f"server/transform{s.index}", transform_logits_for_client, source,
                             upload.schema.classes)
        pkg = staged(f"server/remap{s.index}", remap_to_client_space, transformed, upload.schema, s.index,
                     config.experiment.incentive_target)
        result.transcript.send("server", client_name(s.index), "incentive", pkg.scalars)
        incentive_cost += commcost.cost_idlmh_incremental(n, len(upload.schema), 1)
        post = staged(f"client{s.index}/incentive", client_incentive_distill, s.model, pkg, prep.x_dist,
                      config.incentive.with_seed(seeds("client", s.index, "incentive")))
        post_models[s.index] = post
        result.add("incentive", s.index, "incentive_scalars", pkg.scalars)
        record_client_metrics(result, s, prep.test, stage="incentive", prefix="pre_")
        record_client_metrics(result, s, prep.test, stage="incentive", model=post, prefix="post_")

    finish(result, state["clients"], state["global_model"], prep.test, state["uplink_cost"] + incentive_cost)
    result.add("summary", "global", "incentive_cost", incentive_cost)
    for r in [r for r in result.records if r.stage == "incentive" and r.metric.startswith(("pre_", "post_"))]:
        result.add("summary", r.entity, r.metric, r.value)
    result.artifacts.update(state, post_models=post_models, incentive_cost=incentive_cost)
    return result
