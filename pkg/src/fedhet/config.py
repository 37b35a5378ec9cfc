"""Experiment configuration: dataclasses plus an INI-style text format.

A config file is flat ``key = value`` text grouped in dotted sections::

    [experiment]
    protocol = dlsh
    master_seed = 0

    [dataset]
    source = synth

    [scheme]
    kind = NIID1

    [train.local]
    epochs = 20

Unknown sections or keys are rejected; anything omitted takes its default.
"""

from __future__ import annotations

import configparser
import io
import typing
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError, InputError
from .nn import TrainConfig

PROTOCOLS = ("dlsh", "dlmh", "idlmh", "fedavg")
ARCHS = ("linear", "tiny", "shallow", "deep")


@dataclass(frozen=True)
class DatasetConfig:
    source: str = "synth"  # synth | idx | file
    n_classes: int = 10
    n_per_class: int = 500
    feature_dim: int = 64
    spread: float = 1.0
    modes_per_class: int = 1
    image_side: int = 0  # >0 reshapes synthetic rows to (1, side, side)
    test_fraction: float = 0.1
    path: str = ""  # synthetic container when source = file
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    limit_train: int = 0  # 0 keeps everything
    limit_test: int = 0


@dataclass(frozen=True)
class SchemeConfig:
    kind: str = "IID"
    n_clients: int = 5
    samples_per_client: int = 600


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "tiny"
    hidden: int = 32
    channels: int = 8
    kernel: int = 3
    archs: tuple[str, ...] = ()  # per-client override; clients only


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 10
    learning_rate: float = 0.01
    batch_size: int = 32

    def with_seed(self, seed: int) -> TrainConfig:
        return TrainConfig(self.epochs, self.learning_rate, self.batch_size, seed)


@dataclass(frozen=True)
class ExperimentSection:
    protocol: str = ""
    master_seed: int = 0
    temperature: float = 1.0
    dist_fraction: float = 0.2
    balance_ratio: float = 4.0
    aggregate_mode: str = "zero_fill"  # zero_fill | holders_only
    client_head: str = "compact"  # compact | full (label-space width of DL-MH client heads)
    incentive_target: str = "soft"  # soft | hard
    incentive_source: str = "global"  # global | aggregate
    interested_clients: tuple[int, ...] | None = None  # None ("all") means every client; "none" is ()
    rounds: int = 10  # FedAvg only


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    client_model: ModelConfig = field(default_factory=ModelConfig)
    global_model: ModelConfig = field(default_factory=ModelConfig)
    local: TrainSection = field(default_factory=TrainSection)
    embed: TrainSection = field(default_factory=TrainSection)
    global_train: TrainSection = field(default_factory=TrainSection)
    incentive: TrainSection = field(default_factory=TrainSection)

    @property
    def protocol(self) -> str:
        return self.experiment.protocol

    @property
    def master_seed(self) -> int:
        return self.experiment.master_seed

    def client_arch(self, i: int) -> str:
        archs = self.client_model.archs
        return archs[i % len(archs)] if archs else self.client_model.arch

    def with_(self, **sections) -> "ExperimentConfig":
        """Copy with per-section overrides, e.g. ``cfg.with_(experiment={"master_seed": 3})``."""
        updates = {name: replace(getattr(self, name), **vals) for name, vals in sections.items()}
        out = replace(self, **updates)
        validate(out)
        return out


SECTIONS = {
    "experiment": "experiment",
    "dataset": "dataset",
    "scheme": "scheme",
    "model.client": "client_model",
    "model.global": "global_model",
    "train.local": "local",
    "train.embed": "embed",
    "train.global": "global_train",
    "train.incentive": "incentive",
}
REQUIRED = ("experiment.protocol",)


def _parse_value(key: str, text: str, tp):
    text = text.strip()
    try:
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        if tp is str:
            return text
        if tp == tuple[str, ...]:
            return tuple(s.strip() for s in text.split(",") if s.strip())
        if tp == (tuple[int, ...] | None):
            if text.lower() in ("", "all"):
                return None
            if text.lower() == "none":
                return ()
            return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {text!r}: {exc}") from None
    raise ConfigError(key, f"unsupported field type {tp}")


def _format_value(value, tp) -> str:
    if value is None:
        return "all"
    if value == () and tp == (tuple[int, ...] | None):
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate config text; errors carry the dotted key path."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<text>", str(exc).splitlines()[0]) from None
    seen_keys = set()
    sections = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(section, "unknown section")
        attr = SECTIONS[section]
        cls = type(getattr(ExperimentConfig(), attr))
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        values = {}
        for key, raw in parser.items(section):
            path = f"{section}.{key}"
            if key not in known:
                raise ConfigError(path, "unknown key")
            values[key] = _parse_value(path, raw, hints[key])
            seen_keys.add(path)
        sections[attr] = cls(**values)
    for key in REQUIRED:
        if key not in seen_keys:
            raise ConfigError(key, "missing required key")
    cfg = ExperimentConfig(**sections)
    validate(cfg)
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    for section, attr in SECTIONS.items():
        obj = getattr(cfg, attr)
        hints = typing.get_type_hints(type(obj))
        parser[section] = {f.name: _format_value(getattr(obj, f.name), hints[f.name]) for f in fields(obj)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def _choice(key: str, value, options):
    if value not in options:
        raise ConfigError(key, f"{value!r} not in {options}")


def validate(cfg: ExperimentConfig) -> None:
    ex, ds, sc = cfg.experiment, cfg.dataset, cfg.scheme
    _choice("experiment.protocol", ex.protocol, PROTOCOLS)
    if not ex.temperature > 0:
        raise ConfigError("experiment.temperature", "must be > 0")
    if not 0 < ex.dist_fraction < 1:
        raise ConfigError("experiment.dist_fraction", "must be in (0, 1)")
    if not ex.balance_ratio > 0:
        raise ConfigError("experiment.balance_ratio", "must be > 0")
    _choice("experiment.aggregate_mode", ex.aggregate_mode, ("zero_fill", "holders_only"))
    _choice("experiment.client_head", ex.client_head, ("compact", "full"))
    _choice("experiment.incentive_target", ex.incentive_target, ("soft", "hard"))
    _choice("experiment.incentive_source", ex.incentive_source, ("global", "aggregate"))
    if ex.rounds < 1:
        raise ConfigError("experiment.rounds", "must be >= 1")
    if ex.interested_clients is not None:
        for i in ex.interested_clients:
            if not 0 <= i < sc.n_clients:
                raise ConfigError("experiment.interested_clients", f"client {i} outside [0, {sc.n_clients})")
    _choice("dataset.source", ds.source, ("synth", "idx", "file"))
    if ds.source == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if not getattr(ds, key):
                raise ConfigError(f"dataset.{key}", "required when source = idx")
    if ds.source == "file" and not ds.path:
        raise ConfigError("dataset.path", "required when source = file")
    if not 0 < ds.test_fraction < 1:
        raise ConfigError("dataset.test_fraction", "must be in (0, 1)")
    if ds.image_side and ds.image_side ** 2 != ds.feature_dim:
        raise ConfigError("dataset.image_side", f"side {ds.image_side} does not tile {ds.feature_dim} features")
    for key in ("n_classes", "n_per_class", "feature_dim", "modes_per_class"):
        if getattr(ds, key) < 1:
            raise ConfigError(f"dataset.{key}", "must be >= 1")
    if not ds.spread > 0:
        raise ConfigError("dataset.spread", "must be > 0")
    _choice("scheme.kind", sc.kind, ("IID", "NIID1", "NIID2", "NIID3"))
    if sc.n_clients < 1:
        raise ConfigError("scheme.n_clients", "must be >= 1")
    if sc.samples_per_client < 1:
        raise ConfigError("scheme.samples_per_client", "must be >= 1")
    for section, model in (("model.client", cfg.client_model), ("model.global", cfg.global_model)):
        _choice(f"{section}.arch", model.arch, ARCHS)
        for a in model.archs:
            _choice(f"{section}.archs", a, ARCHS)
        for key in ("hidden", "channels", "kernel"):
            if getattr(model, key) < 1:
                raise ConfigError(f"{section}.{key}", "must be >= 1")
    if cfg.global_model.archs:
        raise ConfigError("model.global.archs", "only client models may be heterogeneous")
    if ex.protocol == "fedavg" and len(set(cfg.client_model.archs) | {cfg.client_arch(0)}) > 1:
        raise ConfigError("model.client.archs", "fedavg needs one shared client architecture")
    for section, attr in (("train.local", "local"), ("train.embed", "embed"),
                          ("train.global", "global_train"), ("train.incentive", "incentive")):
        try:
            getattr(cfg, attr).with_seed(0)
        except InputError as exc:
            raise ConfigError(section, str(exc)) from None
