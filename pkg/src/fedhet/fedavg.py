"""FedAvg baseline: sample-count weighted parameter averaging over R rounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import commcost
from .config import ExperimentConfig
from .dlsh import staged
from .errors import InputError
from .experiment import client_spec, new_result, prepare, restricted_accuracy
from .metrics import RunResult
from .nn import ModelSpec, TrainedModel, init_model, train
from .transcript import client_name


@dataclass(frozen=True)
class FedAvgConfig:
    rounds: int
    local_epochs: int
    n_clients: int
    spec: ModelSpec

    def __post_init__(self):
        if self.rounds < 1 or self.local_epochs < 1 or self.n_clients < 1:
            raise InputError("rounds, local_epochs and n_clients must all be >= 1")


def fedavg_aggregate(models: list[TrainedModel], sample_counts) -> TrainedModel:
    """Every parameter becomes sum_i (n_i / sum n) * param_i, accumulated in client order."""
    if not models or len(models) != len(sample_counts):
        raise InputError(f"{len(models)} models but {len(sample_counts)} sample counts")
    spec = models[0].spec
    if any(m.spec != spec for m in models):
        raise InputError("all models must share one spec")
    counts = [int(c) for c in sample_counts]
    if min(counts) <= 0:
        raise InputError("sample counts must be positive")
    total = sum(counts)
    params = []
    for layer_idx, layer_params in enumerate(spec.layers):
        averaged = []
        for k in range(len(models[0].params[layer_idx])):
            acc = np.zeros_like(models[0].params[layer_idx][k])
            for m, c in zip(models, counts):
                acc = acc + (c / total) * m.params[layer_idx][k]
            averaged.append(acc)
        params.append(tuple(averaged))
    return TrainedModel(spec, tuple(params))


def run_fedavg(config: ExperimentConfig) -> RunResult:
    result, seeds = new_result(config)
    prep = staged("prepare", prepare, config, seeds)
    spec = client_spec(config, 0, prep.input_shape, prep.n_classes)
    fcfg = FedAvgConfig(config.experiment.rounds, config.local.epochs, len(prep.clients), spec)
    model = init_model(spec, seeds("fedavg", "init"))
    counts = [len(c) for c in prep.clients]
    everything = range(prep.n_classes)
    for r in range(1, fcfg.rounds + 1):
        local_models = []
        for i, data in enumerate(prep.clients):
            result.transcript.send("server", client_name(i), "params", model.n_params, round=r)
            cfg = config.local.with_seed(seeds("fedavg", "round", r, "client", i))
            local = staged(f"round{r}/client{i}", train, model, data.features, data.labels, cfg)
            result.transcript.send(client_name(i), "server", "params", local.n_params, round=r)
            local_models.append(local)
        model = staged(f"round{r}/aggregate", fedavg_aggregate, local_models, counts)
        acc = restricted_accuracy(model, everything, prep.test)
        result.add(f"round{r}", "global", "accuracy", acc)
        result.add(f"round{r}", "global", "cumulative_comm_cost",
                   commcost.cost_fedavg(model.n_params, model.n_params, r, fcfg.n_clients))
    cost = commcost.cost_fedavg(model.n_params, model.n_params, fcfg.rounds, fcfg.n_clients)
    result.add("summary", "global", "accuracy", acc)
    result.add("summary", "global", "comm_cost", cost)
    result.add("summary", "global", "transcript_scalars", result.transcript.total())
    result.add("summary", "global", "model_params", model.n_params)
    result.artifacts.update(global_model=model, prep=prep, fedavg_config=fcfg)
    return result
