"""A small numpy neural-network engine with hand-written backprop.

Supports dense and valid-padding convolution layers, ReLU/tanh activations and
flatten. Models are immutable values: ``train`` and friends return new
``TrainedModel`` instances. All arithmetic is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError, NumericError
from .seeding import rng_for

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class Layer:
    """One layer description.

    ``kind`` is ``dense`` (``size`` units), ``conv`` (``size`` output channels,
    square ``kernel``), ``activation`` (``fn`` in relu/tanh) or ``flatten``.
    """

    kind: str
    size: int = 0
    kernel: int = 0
    fn: str = ""

    def __post_init__(self):
        if self.kind in ("dense", "conv") and self.size < 1:
            raise InputError(f"{self.kind} layer needs size >= 1, got {self.size}")
        if self.kind == "conv" and self.kernel < 1:
            raise InputError(f"conv layer needs kernel >= 1, got {self.kernel}")
        if self.kind == "activation" and self.fn not in ACTIVATIONS:
            raise InputError(f"unknown activation {self.fn!r}")
        if self.kind not in ("dense", "conv", "activation", "flatten"):
            raise InputError(f"unknown layer kind {self.kind!r}")

    @property
    def has_params(self) -> bool:
        return self.kind in ("dense", "conv")


def dense(size: int) -> Layer:
    return Layer("dense", size=size)


def conv(channels: int, kernel: int = 3) -> Layer:
    return Layer("conv", size=channels, kernel=kernel)


def relu() -> Layer:
    return Layer("activation", fn="relu")


def tanh() -> Layer:
    return Layer("activation", fn="tanh")


def flatten() -> Layer:
    return Layer("flatten")


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple[int, ...]
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers or self.layers[-1].kind != "dense":
            raise InputError("the last layer must be a dense output layer")
        self.layer_shapes()  # validates compatibility

    @property
    def output_dim(self) -> int:
        return self.layers[-1].size

    @property
    def input_size(self) -> int:
        return math.prod(self.input_shape)

    def layer_shapes(self) -> list[tuple[int, ...]]:
        """Per-sample input shape of every layer, plus the final output shape."""
        shape = self.input_shape
        shapes = [shape]
        for layer in self.layers:
            if layer.kind == "dense":
                if len(shape) != 1:
                    raise InputError(f"dense layer got non-flat input {shape}; add a flatten layer")
                shape = (layer.size,)
            elif layer.kind == "conv":
                if len(shape) != 3:
                    raise InputError(f"conv layer needs (channels, h, w) input, got {shape}")
                c, h, w = shape
                if h < layer.kernel or w < layer.kernel:
                    raise InputError(f"conv kernel {layer.kernel} larger than input {h}x{w}")
                shape = (layer.size, h - layer.kernel + 1, w - layer.kernel + 1)
            elif layer.kind == "flatten":
                shape = (math.prod(shape),)
            shapes.append(shape)
        return shapes

    def with_output_dim(self, n: int) -> "ModelSpec":
        return ModelSpec(self.input_shape, self.layers[:-1] + (dense(n),))

    @classmethod
    def preset(cls, name: str, input_shape: Sequence[int], output_dim: int,
               hidden: int = 32, channels: int = 8, kernel: int = 3) -> "ModelSpec":
        """Desk-scale stand-ins for the deep / shallow / tiny model families.

        ``tiny`` is one hidden dense layer, ``shallow`` one conv + one dense,
        ``deep`` two conv + two dense. The conv presets need an image shape
        ``(channels, h, w)``; a flat input of square size is promoted to one
        channel.
        """
        input_shape = tuple(int(d) for d in input_shape)
        if output_dim < 1:
            raise InputError(f"output_dim must be >= 1, got {output_dim}")
        if name == "linear":
            return cls((math.prod(input_shape),), (dense(output_dim),))
        if name == "tiny":
            return cls((math.prod(input_shape),), (dense(hidden), relu(), dense(output_dim)))
        if len(input_shape) == 1:
            side = math.isqrt(input_shape[0])
            if side * side != input_shape[0]:
                raise InputError(f"preset {name!r} needs an image-shaped input, got {input_shape}")
            input_shape = (1, side, side)
        if name == "shallow":
            layers = (conv(channels, kernel), relu(), flatten(), dense(output_dim))
        elif name == "deep":
            layers = (conv(channels, kernel), relu(), conv(channels, kernel), relu(), flatten(),
                      dense(hidden), relu(), dense(output_dim))
        else:
            raise InputError(f"unknown preset {name!r}")
        return cls(input_shape, layers)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InputError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise InputError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InputError(f"batch_size must be >= 1, got {self.batch_size}")


Params = tuple[tuple[np.ndarray, ...], ...]


def _freeze(params) -> Params:
    out = []
    for layer_params in params:
        frozen = []
        for p in layer_params:
            p = np.array(p, dtype=np.float64)
            p.setflags(write=False)
            frozen.append(p)
        out.append(tuple(frozen))
    return tuple(out)


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    params: Params
    train_loss_history: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "params", _freeze(self.params))
        object.__setattr__(self, "train_loss_history", tuple(float(v) for v in self.train_loss_history))
        expected = param_shapes(self.spec)
        got = [tuple(p.shape for p in lp) for lp in self.params]
        if got != expected:
            raise InputError(f"parameter shapes {got} do not match spec {expected}")

    @property
    def n_params(self) -> int:
        return sum(p.size for lp in self.params for p in lp)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for lp in self.params for p in lp])


def param_shapes(spec: ModelSpec) -> list[tuple[tuple[int, ...], ...]]:
    shapes = []
    in_shapes = spec.layer_shapes()
    for layer, shape in zip(spec.layers, in_shapes):
        if layer.kind == "dense":
            shapes.append(((shape[0], layer.size), (layer.size,)))
        elif layer.kind == "conv":
            shapes.append(((layer.size, shape[0], layer.kernel, layer.kernel), (layer.size,)))
        else:
            shapes.append(())
    return shapes


def _init_layer(rng: np.random.Generator, shapes) -> tuple[np.ndarray, ...]:
    if not shapes:
        return ()
    w_shape, b_shape = shapes
    fan_in = math.prod(w_shape) // w_shape[-1] if len(w_shape) == 2 else math.prod(w_shape[1:])
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, w_shape), rng.uniform(-bound, bound, b_shape)


def init_model(spec: ModelSpec, seed: int) -> TrainedModel:
    """Fresh model with fan-in scaled uniform weights."""
    rng = rng_for(seed)
    return TrainedModel(spec, tuple(_init_layer(rng, s) for s in param_shapes(spec)))


def zero_model(spec: ModelSpec) -> TrainedModel:
    return TrainedModel(spec, tuple(tuple(np.zeros(s) for s in shapes) for shapes in param_shapes(spec)))


# ---------------------------------------------------------------------------
# forward / backward


def _as_batch(spec: ModelSpec, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 0:
        raise InputError("batch must have a leading sample axis")
    if x.ndim == 1:
        x = x[None, :]
    if math.prod(x.shape[1:]) != spec.input_size:
        raise InputError(f"batch feature shape {x.shape[1:]} does not match model input {spec.input_shape}")
    return x.reshape((x.shape[0],) + spec.input_shape)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    n, c, h, w = x.shape
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # n, c, h', w', k, k
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * (h - k + 1) * (w - k + 1), c * k * k)


def _forward_cached(spec: ModelSpec, params, x: np.ndarray):
    cache = []
    a = x
    for layer, lp in zip(spec.layers, params):
        if layer.kind == "dense":
            cache.append(a)
            a = a @ lp[0] + lp[1]
        elif layer.kind == "conv":
            n, _, h, w = a.shape
            k = layer.kernel
            cols = _im2col(a, k)
            cache.append((a.shape, cols))
            oh, ow = h - k + 1, w - k + 1
            out = cols @ lp[0].reshape(layer.size, -1).T + lp[1]
            a = out.reshape(n, oh, ow, layer.size).transpose(0, 3, 1, 2)
        elif layer.kind == "activation":
            a = np.maximum(a, 0.0) if layer.fn == "relu" else np.tanh(a)
            cache.append(a)
        else:
            cache.append(a.shape)
            a = a.reshape(a.shape[0], -1)
    return a, cache


def _backward(spec: ModelSpec, params, cache, grad_out: np.ndarray):
    grads: list[tuple[np.ndarray, ...]] = [()] * len(spec.layers)
    g = grad_out
    for idx in range(len(spec.layers) - 1, -1, -1):
        layer, lp, c = spec.layers[idx], params[idx], cache[idx]
        if layer.kind == "dense":
            grads[idx] = (c.T @ g, g.sum(axis=0))
            if idx:
                g = g @ lp[0].T
        elif layer.kind == "conv":
            in_shape, cols = c
            n, ch, h, w = in_shape
            k = layer.kernel
            oh, ow = h - k + 1, w - k + 1
            g2 = g.transpose(0, 2, 3, 1).reshape(-1, layer.size)
            grads[idx] = ((g2.T @ cols).reshape(lp[0].shape), g2.sum(axis=0))
            if idx:
                dcols = (g2 @ lp[0].reshape(layer.size, -1)).reshape(n, oh, ow, ch, k, k)
                dx = np.zeros(in_shape)
                for i in range(k):
                    for j in range(k):
                        dx[:, :, i:i + oh, j:j + ow] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                g = dx
        elif layer.kind == "activation":
            g = g * (c > 0) if layer.fn == "relu" else g * (1.0 - c * c)
        else:
            g = g.reshape(c)
    return grads


def forward(model: TrainedModel, batch) -> np.ndarray:
    """Raw (pre-softmax) logits, shape ``(n, output_dim)``."""
    out, _ = _forward_cached(model.spec, model.params, _as_batch(model.spec, batch))
    return out


def softmax_t(values, T: float = 1.0) -> np.ndarray:
    """Temperature softmax over the last axis, with max subtraction."""
    if not T > 0:
        raise InputError(f"temperature must be > 0, got {T}")
    z = np.asarray(values, dtype=np.float64) / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(model: TrainedModel, batch, T: float = 1.0) -> np.ndarray:
    return softmax_t(forward(model, batch), T)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean over rows of ``-sum(t * log softmax(z))``."""
    return float(-(targets * _log_softmax(logits)).sum(axis=1).mean())


def loss_and_grads(model: TrainedModel, inputs, targets) -> tuple[float, list[tuple[np.ndarray, ...]]]:
    """Soft-target cross-entropy and its gradient for every parameter."""
    x = _as_batch(model.spec, inputs)
    t = np.asarray(targets, dtype=np.float64)
    logits, cache = _forward_cached(model.spec, model.params, x)
    probs = softmax_t(logits)
    grads = _backward(model.spec, model.params, cache, (probs - t) / x.shape[0])
    return cross_entropy(logits, t), grads


def normalize_rows(targets) -> np.ndarray:
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim != 2:
        raise InputError(f"soft targets must be a 2-D array, got shape {t.shape}")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise InputError("soft targets must be finite and nonnegative")
    sums = t.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise InputError("soft target rows must have positive mass")
    return t / sums


def _fit(model: TrainedModel, x: np.ndarray, targets: np.ndarray, cfg: TrainConfig) -> TrainedModel:
    params = [list(lp) for lp in model.params]
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is detected below
        return _epochs(model.spec, params, x, targets, cfg, rng_for(cfg.seed), list(model.train_loss_history))


def _epochs(spec, params, x, targets, cfg, rng, history) -> TrainedModel:
    n = x.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, tb = x[idx], targets[idx]
            logits, cache = _forward_cached(spec, params, xb)
            total += cross_entropy(logits, tb) * len(idx)
            grads = _backward(spec, params, cache, (softmax_t(logits) - tb) / len(idx))
            for lp, gp in zip(params, grads):
                for k, g in enumerate(gp):
                    lp[k] = lp[k] - cfg.learning_rate * g
        loss = total / n
        if not math.isfinite(loss) or not all(np.all(np.isfinite(p)) for lp in params for p in lp):
            raise NumericError("training diverged (non-finite loss)", epoch)
        history.append(loss)
    return TrainedModel(spec, tuple(tuple(lp) for lp in params), tuple(history))


def _check_nonempty(n: int):
    if n == 0:
        raise InputError("dataset is empty")


def train(model: TrainedModel, features, labels, cfg: TrainConfig) -> TrainedModel:
    """Mini-batch SGD on hard labels; batch order is drawn from ``cfg.seed``."""
    x = _as_batch(model.spec, features) if len(features) else np.empty((0,))
    _check_nonempty(len(x))
    y = np.asarray(labels, dtype=np.int64)
    if len(y) != len(x):
        raise InputError(f"{len(x)} samples but {len(y)} labels")
    if y.min() < 0 or y.max() >= model.spec.output_dim:
        raise InputError(f"labels must lie in [0, {model.spec.output_dim})")
    return _fit(model, x, np.eye(model.spec.output_dim)[y], cfg)


def soft_train(model: TrainedModel, inputs, soft_targets, cfg: TrainConfig) -> TrainedModel:
    """SGD on cross-entropy against soft target rows (renormalized to sum 1)."""
    x = _as_batch(model.spec, inputs) if len(inputs) else np.empty((0,))
    _check_nonempty(len(x))
    t = normalize_rows(soft_targets)
    if t.shape != (len(x), model.spec.output_dim):
        raise InputError(f"soft targets shape {t.shape} != ({len(x)}, {model.spec.output_dim})")
    return _fit(model, x, t, cfg)


def replace_head(model: TrainedModel, new_output_dim: int, seed: int) -> TrainedModel:
    """Keep every layer but the last; reinitialize the last with ``new_output_dim`` units."""
    if new_output_dim < 1:
        raise InputError(f"new_output_dim must be >= 1, got {new_output_dim}")
    spec = model.spec.with_output_dim(new_output_dim)
    head = _init_layer(rng_for(seed), param_shapes(spec)[-1])
    return TrainedModel(spec, model.params[:-1] + (head,))


def predict(model: TrainedModel, batch) -> np.ndarray:
    """Argmax class per row; ties go to the lowest index."""
    return np.argmax(forward(model, batch), axis=1)


def accuracy(model: TrainedModel, features, labels) -> float:
    y = np.asarray(labels, dtype=np.int64)
    _check_nonempty(len(y))
    if y.min() < 0 or y.max() >= model.spec.output_dim:
        raise InputError(f"labels must lie in [0, {model.spec.output_dim})")
    return float(np.mean(predict(model, features) == y))
