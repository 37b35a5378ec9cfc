"""Distillation across clients whose output heads cover different label sets.

A client relabels its data into a compact local space (``MaskDict``), trains a
head only as wide as the classes it holds, and uploads narrow soft logits with
the mapping. The server scatters every upload back into the global label space
(zeros elsewhere) before the usual confidence-weighted aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import commcost
from .config import ExperimentConfig
from .datasets import LabeledDataset
from .dlsh import (ClientState, ConfidenceMatrix, GlobalDistillSet, staged, finish, normalize_confidence,
                   record_client_metrics, server_distill, train_client, weighted_sum)
from .errors import InputError
from .experiment import client_spec, global_spec, new_result, prepare
from .metrics import RunResult
from .transcript import client_name


@dataclass(frozen=True)
class MaskDict:
    """Local label ``k`` stands for global class ``classes[k]``; ``classes`` is strictly increasing."""

    classes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        if not self.classes:
            raise InputError("a mask dict needs at least one class")
        if any(b <= a for a, b in zip(self.classes, self.classes[1:])) or self.classes[0] < 0:
            raise InputError(f"global classes must be nonnegative and strictly increasing: {self.classes}")

    def __len__(self) -> int:
        return len(self.classes)

    def pairs(self) -> list[tuple[int, int]]:
        """Wire form: ordered (local, global) pairs."""
        return list(enumerate(self.classes))

    def to_global(self, local: int) -> int:
        return self.classes[local]

    def to_local(self, global_label: int) -> int:
        try:
            return self.classes.index(int(global_label))
        except ValueError:
            raise InputError(f"label {global_label} is not in schema {self.classes}") from None

    @property
    def scalars(self) -> int:
        # one scalar per held class, as priced in the DL-MH cost formula
        return len(self.classes)


def build_mask_dict(labels_present) -> MaskDict:
    present = sorted({int(c) for c in labels_present})
    if not present:
        raise InputError("cannot build a mask dict from an empty label set")
    return MaskDict(tuple(present))


def remap_local_labels(data: LabeledDataset, schema: MaskDict) -> LabeledDataset:
    lookup = {g: k for k, g in enumerate(schema.classes)}
    missing = sorted(set(int(y) for y in np.unique(data.labels)) - lookup.keys())
    if missing:
        raise InputError(f"label {missing[0]} is not in schema {schema.classes}")
    local = np.array([lookup[int(y)] for y in data.labels], dtype=np.int64)
    return LabeledDataset(data.features, local, len(schema), data.image_shape)


@dataclass(frozen=True)
class ClientUploadMH:
    logits: np.ndarray  # (|X_dist|, k_i) soft logits in local label space
    confidence: np.ndarray
    schema: MaskDict

    def __post_init__(self):
        if self.logits.ndim != 2 or self.logits.shape[1] != len(self.schema):
            raise InputError(f"logit width {self.logits.shape} does not match schema size {len(self.schema)}")
        if self.confidence.shape != (self.logits.shape[0],):
            raise InputError("confidence must hold one score per distillation sample")

    @property
    def scalars(self) -> int:
        return self.logits.size + self.confidence.size + self.schema.scalars


def unmask_logits(upload: ClientUploadMH, n_global_classes: int) -> np.ndarray:
    """Scatter local columns to their global indexes; every other column is exactly 0."""
    if upload.schema.classes[-1] >= n_global_classes:
        raise InputError(f"schema class {upload.schema.classes[-1]} >= {n_global_classes} global classes")
    out = np.zeros((upload.logits.shape[0], n_global_classes))
    out[:, list(upload.schema.classes)] = upload.logits
    return out


def holder_mask(schemas: list[MaskDict], n_global_classes: int) -> np.ndarray:
    """(n_clients, n_classes) indicator of which client's head covers which class."""
    mask = np.zeros((len(schemas), n_global_classes))
    for i, s in enumerate(schemas):
        mask[i, list(s.classes)] = 1.0
    return mask


def aggregate_unmasked(unmasked: list[np.ndarray], conf: ConfidenceMatrix, schemas: list[MaskDict],
                       mode: str = "zero_fill") -> np.ndarray:
    """Confidence-weighted sum over clients.

    ``zero_fill`` treats a client's missing classes as value 0 with its full
    weight. ``holders_only`` renormalizes, per class, over the clients whose
    head covers that class.
    """
    y = weighted_sum(unmasked, conf.weights)
    if mode == "zero_fill":
        return y
    if mode != "holders_only":
        raise InputError(f"unknown aggregate mode {mode!r}")
    holders = holder_mask(schemas, y.shape[1])
    norm = conf.weights @ holders  # (n, classes): weight mass of the holders of each class
    return np.divide(y, norm, out=np.zeros_like(y), where=norm > 0)


def client_schema(config: ExperimentConfig, data: LabeledDataset) -> MaskDict:
    if config.experiment.client_head == "full":
        return build_mask_dict(range(data.n_classes))
    return build_mask_dict(data.classes_present())


def dlmh_round(config: ExperimentConfig) -> tuple[RunResult, dict]:
    """Client training, unmasking, aggregation and global distillation; shared with I-DL-MH."""
    result, seeds = new_result(config)
    prep = staged("prepare", prepare, config, seeds)
    n = len(prep.x_dist)
    uploads, states = [], []
    for i, data in enumerate(prep.clients):
        schema = staged(f"client{i}/mask", client_schema, config, data)
        local = staged(f"client{i}/remap", remap_local_labels, data, schema)
        spec = client_spec(config, i, prep.input_shape, len(schema))
        model, classifier, soft, conf = train_client(config, seeds, i, local, spec, prep.x_dist)
        upload = ClientUploadMH(soft, conf, schema)
        result.transcript.send(client_name(i), "server", "upload", upload.scalars)
        uploads.append(upload)
        state = ClientState(i, model, classifier, list(schema.classes), data.classes_present(), len(data))
        states.append(state)
        record_client_metrics(result, state, prep.test)
        result.add("client", i, "head_width", len(schema))

    unmasked = [staged("server/unmask", unmask_logits, u, prep.n_classes) for u in uploads]
    weights = staged("server/confidence", normalize_confidence, [u.confidence for u in uploads],
                     config.experiment.temperature)
    schemas = [u.schema for u in uploads]
    y_g = staged("server/aggregate", aggregate_unmasked, unmasked, weights, schemas,
                 config.experiment.aggregate_mode)
    gspec = global_spec(config, prep.input_shape, prep.n_classes)
    global_model = staged("server/distill", server_distill, gspec, GlobalDistillSet(prep.x_dist, y_g),
                          config.global_train.with_seed(seeds("server", "global")))
    cost = sum(commcost.cost_dlmh(n, len(u.schema), n, u.schema.scalars, 1) for u in uploads)
    state = dict(seeds=seeds, prep=prep, uploads=uploads, clients=states, y_g=y_g, weights=weights,
                 global_model=global_model, unmasked=unmasked, uplink_cost=cost)
    return result, state


def run_dlmh(config: ExperimentConfig) -> RunResult:
    result, state = dlmh_round(config)
    finish(result, state["clients"], state["global_model"], state["prep"].test, state["uplink_cost"])
    result.artifacts.update(state)
    return result
