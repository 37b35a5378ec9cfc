"""One-round distillation with confidence-weighted client ensembles.

Each client trains on its private data, then trains a binary classifier
(same body, 2-node head) that separates its private samples (label 0) from
the public distillation samples (label 1). The class-0 probability on each
public sample is the client's raw confidence. The server softmaxes the raw
confidences across clients, weights every client's soft logits by them, and
distils a global model on the weighted targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import commcost
from .config import ExperimentConfig
from .datasets import LabeledDataset, UnlabeledDataset
from .errors import FedHetError, InputError, StageError
from .experiment import client_spec, global_spec, new_result, prepare, restricted_accuracy
from .metrics import RunResult
from .nn import (ModelSpec, TrainConfig, TrainedModel, init_model, predict_proba, replace_head,
                 soft_train, softmax_t, train)
from .seeding import derive_seed, rng_for
from .transcript import client_name


@dataclass(frozen=True)
class ClientUploadSH:
    """``logits`` holds softmax outputs over X_dist (the "soft logits" a client shares)."""

    logits: np.ndarray  # (|X_dist|, n_classes)
    confidence: np.ndarray  # (|X_dist|,), raw classifier scores

    def __post_init__(self):
        if self.logits.ndim != 2 or self.confidence.shape != (self.logits.shape[0],):
            raise InputError(f"upload shapes disagree: logits {self.logits.shape}, "
                             f"confidence {self.confidence.shape}")
        if not np.all(np.isfinite(self.confidence)):
            raise InputError("confidence entries must be finite")

    @property
    def scalars(self) -> int:
        return self.logits.size + self.confidence.size


@dataclass(frozen=True)
class ConfidenceMatrix:
    weights: np.ndarray  # (|X_dist|, n_clients)

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2 or np.any(w < 0) or np.any(w > 1):
            raise InputError("confidence weights must be a 2-D array with entries in [0, 1]")
        if not np.allclose(w.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise InputError("confidence rows must sum to 1")

    @property
    def n_clients(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class GlobalDistillSet:
    x_dist: UnlabeledDataset
    y_g: np.ndarray

    def __post_init__(self):
        if self.y_g.shape[0] != len(self.x_dist):
            raise InputError(f"{len(self.x_dist)} distillation rows but {self.y_g.shape[0]} targets")


def client_local_train(client_data: LabeledDataset, spec: ModelSpec, cfg: TrainConfig) -> TrainedModel:
    """Fresh model (initialised from ``cfg.seed``) trained on the client's own labels."""
    if len(client_data) == 0:
        raise InputError("client has no training data")
    model = init_model(spec, derive_seed(cfg.seed, "init"))
    return train(model, client_data.features, client_data.labels, cfg)


def build_embed_dataset(client_x: np.ndarray, x_dist: UnlabeledDataset) -> LabeledDataset:
    """Client rows labelled 0 followed by public rows labelled 1."""
    client_x = np.asarray(client_x, dtype=np.float64)
    if len(client_x) == 0 or len(x_dist) == 0:
        raise InputError("both the client block and the public block must be non-empty")
    if client_x.shape[1:] != x_dist.features.shape[1:]:
        raise InputError(f"feature dims differ: {client_x.shape[1:]} vs {x_dist.features.shape[1:]}")
    features = np.concatenate([client_x, x_dist.features])
    labels = np.concatenate([np.zeros(len(client_x), np.int64), np.ones(len(x_dist), np.int64)])
    return LabeledDataset(features, labels, 2, x_dist.image_shape)


def balanced_embed_dataset(client_x: np.ndarray, x_dist: UnlabeledDataset, balance_ratio: float,
                           seed: int) -> LabeledDataset:
    """Embed set whose public block is subsampled to ``balance_ratio * len(client_x)`` rows."""
    cap = min(len(x_dist), max(1, int(round(balance_ratio * len(client_x)))))
    if cap < len(x_dist):
        idx = np.sort(rng_for(seed).choice(len(x_dist), size=cap, replace=False))
        x_dist = UnlabeledDataset(x_dist.features[idx], x_dist.image_shape)
    return build_embed_dataset(client_x, x_dist)


def train_binary_classifier(client_model: TrainedModel, embed: LabeledDataset, cfg: TrainConfig) -> TrainedModel:
    if set(np.unique(embed.labels)) != {0, 1}:
        raise InputError("embed dataset must contain both labels 0 and 1")
    head = replace_head(client_model, 2, derive_seed(cfg.seed, "head"))
    return train(head, embed.features, embed.labels, cfg)


def raw_confidence(classifier: TrainedModel, x_dist) -> np.ndarray:
    """Probability that each public sample belongs to the client's data (class 0)."""
    if classifier.spec.output_dim != 2:
        raise InputError(f"classifier must have a 2-node head, got {classifier.spec.output_dim}")
    features = x_dist.features if isinstance(x_dist, UnlabeledDataset) else x_dist
    return predict_proba(classifier, features)[:, 0]


def normalize_confidence(raw, T: float) -> ConfidenceMatrix:
    """Temperature softmax of the raw scores across the client axis, per sample."""
    raw = [np.asarray(r, dtype=np.float64) for r in raw]
    if not raw:
        raise InputError("need at least one client")
    if len({r.shape for r in raw}) != 1 or raw[0].ndim != 1:
        raise InputError(f"clients report different shapes: {[r.shape for r in raw]}")
    return ConfidenceMatrix(softmax_t(np.stack(raw, axis=1), T))


def weighted_sum(rows: list[np.ndarray], weights: np.ndarray) -> np.ndarray:
    """``sum_i weights[:, i] * rows[i]`` accumulated client by client, left to right."""
    if len(rows) != weights.shape[1]:
        raise InputError(f"{len(rows)} clients but {weights.shape[1]} confidence columns")
    shape = rows[0].shape
    for r in rows:
        if r.shape != shape or r.shape[0] != weights.shape[0]:
            raise InputError(f"logit shapes disagree: {[x.shape for x in rows]} vs weights {weights.shape}")
    y = np.zeros(shape)
    for i, r in enumerate(rows):
        y = y + weights[:, i:i + 1] * r
    return y


def aggregate_weighted(uploads: list[ClientUploadSH], conf: ConfidenceMatrix) -> np.ndarray:
    """Y_g(x, c) = sum_i conf(x, i) * logits_i(x, c)."""
    return weighted_sum([u.logits for u in uploads], conf.weights)


def server_distill(global_spec: ModelSpec, dset: GlobalDistillSet, cfg: TrainConfig) -> TrainedModel:
    if dset.y_g.shape[1] != global_spec.output_dim:
        raise InputError(f"targets have width {dset.y_g.shape[1]}, global head {global_spec.output_dim}")
    model = init_model(global_spec, derive_seed(cfg.seed, "init"))
    return soft_train(model, dset.x_dist.features, dset.y_g, cfg)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class ClientState:
    index: int
    model: TrainedModel
    classifier: TrainedModel
    head_classes: list[int]  # global class behind each output node
    held_classes: list[int]  # classes present in the client's training data
    n_samples: int


def staged(name: str, fn, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except FedHetError as exc:
        raise StageError(name, exc) from exc


def train_client(config: ExperimentConfig, seeds, i: int, data: LabeledDataset, spec: ModelSpec,
                 x_dist: UnlabeledDataset) -> tuple[TrainedModel, TrainedModel, np.ndarray, np.ndarray]:
    """Local model, binary classifier, soft logits over X_dist and raw confidence."""
    model = staged(f"client{i}/local", client_local_train, data, spec,
                   config.local.with_seed(seeds("client", i, "local")))
    embed = staged(f"client{i}/embed", balanced_embed_dataset, data.features, x_dist,
                   config.experiment.balance_ratio, seeds("client", i, "embed_subsample"))
    classifier = staged(f"client{i}/classifier", train_binary_classifier, model, embed,
                        config.embed.with_seed(seeds("client", i, "embed")))
    soft = predict_proba(model, x_dist.features)
    return model, classifier, soft, raw_confidence(classifier, x_dist)


def record_client_metrics(result: RunResult, state: ClientState, test: LabeledDataset, stage: str = "client",
                          model: TrainedModel | None = None, prefix: str = "") -> None:
    model = model or state.model
    result.add(stage, state.index, prefix + "accuracy_full", restricted_accuracy(model, state.head_classes, test))
    result.add(stage, state.index, prefix + "accuracy_ownclasses",
               restricted_accuracy(model, state.head_classes, test, state.held_classes))
    result.add(stage, state.index, prefix + "accuracy_head",
               restricted_accuracy(model, state.head_classes, test, state.head_classes))


def run_dlsh(config: ExperimentConfig) -> RunResult:
    result, seeds = new_result(config)
    prep = staged("prepare", prepare, config, seeds)
    n = len(prep.x_dist)
    uploads, states = [], []
    for i, data in enumerate(prep.clients):
        spec = client_spec(config, i, prep.input_shape, prep.n_classes)
        model, classifier, soft, conf = train_client(config, seeds, i, data, spec, prep.x_dist)
        upload = ClientUploadSH(soft, conf)
        result.transcript.send(client_name(i), "server", "upload", upload.scalars)
        uploads.append(upload)
        state = ClientState(i, model, classifier, list(range(prep.n_classes)), data.classes_present(), len(data))
        states.append(state)
        record_client_metrics(result, state, prep.test)

    weights = staged("server/confidence", normalize_confidence, [u.confidence for u in uploads],
                     config.experiment.temperature)
    y_g = staged("server/aggregate", aggregate_weighted, uploads, weights)
    gspec = global_spec(config, prep.input_shape, prep.n_classes)
    global_model = staged("server/distill", server_distill, gspec, GlobalDistillSet(prep.x_dist, y_g),
                          config.global_train.with_seed(seeds("server", "global")))

    cost = commcost.cost_dlsh(n, prep.n_classes, n, len(uploads))
    finish(result, states, global_model, prep.test, cost)
    result.artifacts.update(y_g=y_g, weights=weights, uploads=uploads, clients=states,
                            global_model=global_model, prep=prep)
    return result


def finish(result: RunResult, states: list[ClientState], global_model: TrainedModel, test: LabeledDataset,
           cost: int) -> None:
    """Global evaluation, message counts and the summary records common to DL-SH and DL-MH."""
    global_acc = restricted_accuracy(global_model, range(global_model.spec.output_dim), test)
    result.add("server", "global", "accuracy", global_acc)
    for s in states:
        result.add("server", s.index, "global_accuracy_ownclasses",
                   restricted_accuracy(global_model, range(global_model.spec.output_dim), test, s.held_classes))
        result.add("comm", s.index, "uplink_messages", len(result.transcript.select(sender=client_name(s.index))))
    clients_avg = float(np.mean([r.value for r in result.records
                                 if r.stage == "client" and r.metric == "accuracy_full"]))
    result.add("summary", "global", "accuracy", global_acc)
    result.add("summary", "clients", "clients_avg_accuracy", clients_avg)
    result.add("summary", "global", "comm_cost", cost)
    result.add("summary", "global", "transcript_scalars", result.transcript.total())
