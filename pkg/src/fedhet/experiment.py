"""Data preparation and evaluation helpers shared by all protocol runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, ModelConfig, serialize_config
from .datasets import (LabeledDataset, PartitionScheme, UnlabeledDataset, holdout_split, load_idx,
                       load_synthetic, partition, split_distillation, split_indices, synth_blobs)
from .metrics import RunResult, make_run_id
from .nn import ModelSpec, TrainedModel, predict
from .seeding import SeedBook


@dataclass
class Prepared:
    clients: list[LabeledDataset]
    x_dist: UnlabeledDataset
    test: LabeledDataset
    n_classes: int
    input_shape: tuple[int, ...]


def load_dataset(config: ExperimentConfig, seeds: SeedBook) -> tuple[LabeledDataset, LabeledDataset]:
    """(train, test); synthetic sources get a seeded holdout as the test split."""
    ds = config.dataset
    if ds.source == "idx":
        train = load_idx(ds.train_images, ds.train_labels, ds.n_classes)
        test = load_idx(ds.test_images, ds.test_labels, ds.n_classes)
        if ds.limit_train and ds.limit_train < len(train):
            _, keep = split_indices(len(train), ds.limit_train / len(train), seeds("data", "limit_train"))
            train = train.subset(keep)
        if ds.limit_test and ds.limit_test < len(test):
            _, keep = split_indices(len(test), ds.limit_test / len(test), seeds("data", "limit_test"))
            test = test.subset(keep)
        return train, test
    if ds.source == "file":
        full = load_synthetic(ds.path)
    else:
        shape = (1, ds.image_side, ds.image_side) if ds.image_side else None
        full = synth_blobs(ds.n_classes, ds.n_per_class, ds.feature_dim, ds.spread, seeds("data"), shape,
                           ds.modes_per_class)
    return holdout_split(full, ds.test_fraction, seeds("data", "holdout"))


def prepare(config: ExperimentConfig, seeds: SeedBook) -> Prepared:
    train, test = load_dataset(config, seeds)
    pool, x_dist = split_distillation(train, config.experiment.dist_fraction, seeds("split"))
    scheme = PartitionScheme(config.scheme.kind, config.scheme.n_clients, train.n_classes,
                             config.scheme.samples_per_client)
    clients = partition(pool, scheme, seeds("partition"))
    return Prepared(clients, x_dist, test, train.n_classes, train.input_shape)


def model_spec(model: ModelConfig, arch: str, input_shape, output_dim: int) -> ModelSpec:
    return ModelSpec.preset(arch, input_shape, output_dim, hidden=model.hidden,
                            channels=model.channels, kernel=model.kernel)


def client_spec(config: ExperimentConfig, i: int, input_shape, output_dim: int) -> ModelSpec:
    return model_spec(config.client_model, config.client_arch(i), input_shape, output_dim)


def global_spec(config: ExperimentConfig, input_shape, output_dim: int) -> ModelSpec:
    return model_spec(config.global_model, config.global_model.arch, input_shape, output_dim)


def new_result(config: ExperimentConfig) -> tuple[RunResult, SeedBook]:
    seeds = SeedBook(config.master_seed)
    result = RunResult(config.protocol, make_run_id(serialize_config(config)), config.master_seed)
    result.seeds = seeds.issued
    return result, seeds


def global_predictions(model: TrainedModel, head_classes, features) -> np.ndarray:
    """Predicted global class per row for a head whose outputs stand for ``head_classes``."""
    return np.asarray(head_classes, dtype=np.int64)[predict(model, features)]


def restricted_accuracy(model: TrainedModel, head_classes, test: LabeledDataset, classes=None) -> float:
    """Accuracy in the global label space, optionally only over test rows labelled in ``classes``."""
    if classes is None:
        rows = np.arange(len(test))
    else:
        rows = np.flatnonzero(np.isin(test.labels, list(classes)))
    if len(rows) == 0:
        return 0.0
    preds = global_predictions(model, head_classes, test.features[rows])
    return float(np.mean(preds == test.labels[rows]))
