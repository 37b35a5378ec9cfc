"""Data ingestion, the train/distillation split and per-client partitioning."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .seeding import derive_seed, rng_for

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SCHEMES = ("IID", "NIID1", "NIID2", "NIID3")


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (n, d), flat rows
    labels: np.ndarray  # (n,) int64
    n_classes: int
    image_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.features.ndim != 2:
            raise InputError(f"features must be 2-D (n, d), got shape {self.features.shape}")
        if len(self.labels) != len(self.features):
            raise InputError(f"{len(self.features)} samples but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InputError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.image_shape or (self.features.shape[1],)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.n_classes, self.image_shape)

    def classes_present(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))


@dataclass(frozen=True)
class UnlabeledDataset:
    features: np.ndarray
    image_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) < 1:
            raise InputError("unlabeled dataset needs at least one sample")

    def __len__(self) -> int:
        return len(self.features)


# ---------------------------------------------------------------------------
# IDX


def _read_idx(path: Path, expected_magic: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header", len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated dimension block", len(raw))
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    size = math.prod(dims)
    if len(raw) < header + size:
        raise FormatError(f"{path}: expected {size} data bytes, found {len(raw) - header}", len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path, n_classes: int = 10) -> LabeledDataset:
    """Read an IDX image/label pair (MNIST layout); pixels are scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels", 4)
    if len(labels) and labels.max() >= n_classes:
        raise FormatError(f"label {labels.max()} outside [0, {n_classes})", 8)
    n, h, w = images.shape
    return LabeledDataset(images.reshape(n, h * w).astype(np.float64) / 255.0,
                          labels.astype(np.int64), n_classes, (1, h, w))


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX (magic encodes ubyte type and rank)."""
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(">" + "I" * array.ndim, *array.shape)
    Path(path).write_bytes(header + array.tobytes())


# ---------------------------------------------------------------------------
# synthetic data


def synth_blobs(n_classes: int, n_per_class: int, feature_dim: int, spread: float, seed: int,
                image_shape: tuple[int, ...] | None = None, modes_per_class: int = 1) -> LabeledDataset:
    """Isotropic Gaussian blobs around standard-normal class centers.

    With ``modes_per_class > 1`` each class is an equal mixture of that many
    blobs, which makes the classes non-linearly separable.
    """
    if min(n_classes, n_per_class, feature_dim, modes_per_class) < 1:
        raise InputError("n_classes, n_per_class, feature_dim and modes_per_class must all be >= 1")
    if not spread > 0:
        raise InputError(f"spread must be > 0, got {spread}")
    rng = rng_for(seed)
    centers = rng.normal(size=(n_classes * modes_per_class, feature_dim))
    labels = np.repeat(np.arange(n_classes), n_per_class)
    if modes_per_class == 1:
        component = labels
    else:
        component = labels * modes_per_class + rng.integers(0, modes_per_class, size=len(labels))
    features = centers[component] + spread * rng.normal(size=(len(labels), feature_dim))
    order = rng.permutation(len(labels))
    if image_shape is not None and math.prod(image_shape) != feature_dim:
        raise InputError(f"image_shape {image_shape} does not hold {feature_dim} features")
    return LabeledDataset(features[order], labels[order], n_classes, image_shape)


def save_synthetic(path, data: LabeledDataset) -> None:
    """Little-endian container: u32 n, feature_dim, n_classes; f32 features; u32 labels."""
    n, d = data.features.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<III", n, d, data.n_classes))
        f.write(data.features.astype("<f4").tobytes())
        f.write(data.labels.astype("<u4").tobytes())


def load_synthetic(path) -> LabeledDataset:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header", len(raw))
    n, d, n_classes = struct.unpack("<III", raw[:12])
    expected = 12 + 4 * n * d + 4 * n
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}", min(len(raw), expected))
    features = np.frombuffer(raw, dtype="<f4", count=n * d, offset=12).reshape(n, d).astype(np.float64)
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=12 + 4 * n * d).astype(np.int64)
    return LabeledDataset(features, labels, n_classes)


# ---------------------------------------------------------------------------
# splits


def holdout_split(full: LabeledDataset, test_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded (train, test) split used when no official test set exists."""
    if not 0 < test_fraction < 1:
        raise InputError(f"test_fraction must be in (0, 1), got {test_fraction}")
    order = rng_for(seed).permutation(len(full))
    n_test = round(test_fraction * len(full))
    return full.subset(np.sort(order[n_test:])), full.subset(np.sort(order[:n_test]))


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = rng_for(seed).permutation(n)
    k = round(fraction * n)
    return np.sort(order[k:]), np.sort(order[:k])


def split_distillation(full: LabeledDataset, dist_fraction: float, seed: int) -> tuple[LabeledDataset, UnlabeledDataset]:
    """Disjoint (client pool, unlabeled distillation set) split; labels of the latter are dropped."""
    if not 0 < dist_fraction < 1:
        raise InputError(f"dist_fraction must be in (0, 1), got {dist_fraction}")
    keep, dist = split_indices(len(full), dist_fraction, seed)
    return full.subset(keep), UnlabeledDataset(full.features[dist], full.image_shape)


# ---------------------------------------------------------------------------
# class-probability schemes


@dataclass(frozen=True)
class PartitionScheme:
    kind: str
    n_clients: int
    n_classes: int
    samples_per_client: int = 600

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise InputError(f"unknown scheme {self.kind!r}; expected one of {SCHEMES}")
        if self.n_clients < 1 or self.n_classes < 1:
            raise InputError("n_clients and n_classes must be >= 1")
        if self.samples_per_client < 1:
            raise InputError(f"samples_per_client must be >= 1, got {self.samples_per_client}")
        if self.kind == "NIID1" and self.n_classes < 2:
            raise InputError("NIID1 needs at least 2 classes")
        if self.kind == "NIID2" and self.n_classes < 2:
            raise InputError("NIID2 needs at least 2 classes")
        if self.kind == "NIID3":
            niid3_cycle(self.n_classes)


def niid3_cycle(n_classes: int) -> int:
    """Client count m with m(m-1)/2 == n_classes; each class is an edge of K_m."""
    m = (1 + math.isqrt(1 + 8 * n_classes)) // 2
    if m < 2 or m * (m - 1) // 2 != n_classes:
        raise InputError(f"NIID3 needs a triangular class count (3, 6, 10, 15, ...), got {n_classes}")
    return m


def _niid3_support(n_classes: int, client: int) -> list[int]:
    m = niid3_cycle(n_classes)
    v = client % m
    support = []
    edge = 0
    for a in range(m):
        for b in range(a + 1, m):
            if v in (a, b):
                support.append(edge)
            edge += 1
    return support


def class_support(scheme: PartitionScheme, client_index: int) -> list[int]:
    c = scheme.n_classes
    i = client_index
    if scheme.kind == "IID":
        return list(range(c))
    if scheme.kind == "NIID1":
        return sorted({(2 * i) % c, (2 * i + 1) % c})
    if scheme.kind == "NIID2":
        shared = c // 2
        return list(range(shared)) + [shared + i % (c - shared)]
    return _niid3_support(c, i)


def class_probability_vector(scheme: PartitionScheme, client_index: int) -> np.ndarray:
    """Uniform mass over the client's class support (empty support is impossible)."""
    if not 0 <= client_index < scheme.n_clients:
        raise InputError(f"client_index {client_index} outside [0, {scheme.n_clients})")
    support = class_support(scheme, client_index)
    p = np.zeros(scheme.n_classes)
    p[support] = 1.0 / len(support)
    return p


def partition(pool: LabeledDataset, scheme: PartitionScheme, seed: int) -> list[LabeledDataset]:
    """Each client draws ``samples_per_client`` samples with replacement.

    The class of every draw follows the client's probability vector, then a
    sample of that class is picked uniformly from the pool.
    """
    if scheme.n_classes != pool.n_classes:
        raise InputError(f"scheme has {scheme.n_classes} classes, pool has {pool.n_classes}")
    by_class = [np.flatnonzero(pool.labels == c) for c in range(pool.n_classes)]
    clients = []
    for i in range(scheme.n_clients):
        p = class_probability_vector(scheme, i)
        for c in np.flatnonzero(p):
            if len(by_class[c]) == 0:
                raise InputError(f"client {i} needs class {c}, which is absent from the pool")
        rng = rng_for(derive_seed(seed, "partition", i))
        classes = rng.choice(pool.n_classes, size=scheme.samples_per_client, p=p)
        idx = np.empty(scheme.samples_per_client, dtype=np.int64)
        for c in np.unique(classes):
            where = np.flatnonzero(classes == c)
            idx[where] = by_class[c][rng.integers(0, len(by_class[c]), size=len(where))]
        clients.append(pool.subset(idx))
    return clients
