"""Datasets: container, synthetic mixture generator, partitioning, IDX reader."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


@dataclass
class Dataset:
    """Feature matrix, integer labels and a disjoint per-device partition.

    Shards are index arrays into the sample axis; they must be pairwise
    disjoint and cover every sample exactly once.
    """

    features: np.ndarray  # (S, b) float
    labels: np.ndarray  # (S,) int
    shards: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ConfigError("features must be (S, b) and labels (S,)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ConfigError("feature/label count mismatch")
        if not self.shards:
            self.shards = [np.arange(self.n_samples)]
        self.shards = [np.asarray(s, dtype=np.int64) for s in self.shards]
        counts = np.bincount(np.concatenate(self.shards), minlength=self.n_samples)
        if len(counts) != self.n_samples or not np.all(counts == 1):
            raise ConfigError("shards must be disjoint and cover all samples")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_devices(self) -> int:
        return len(self.shards)

    @property
    def shard_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.shards])

    @property
    def shard_weights(self) -> np.ndarray:
        """Sample-count weights S_k / S, summing to one."""
        sizes = self.shard_sizes
        return sizes / sizes.sum()

    def device(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.shards[k]
        return self.features[idx], self.labels[idx]

    def repartition(self, shards: list) -> "Dataset":
        return Dataset(self.features, self.labels, shards)


def make_gaussian_mixture(
    n_classes: int,
    n_features: int,
    n_samples: int,
    separation: float,
    gen: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced isotropic Gaussian mixture with configurable class separation.

    Class means are drawn once at radius ~ ``separation``; per-class samples
    add unit-variance noise. Labels cycle through classes before shuffling so
    the class counts differ by at most one.
    """
    if n_classes < 2:
        raise ConfigError("need at least two classes")
    means = separation * gen.standard_normal((n_classes, n_features)) / np.sqrt(n_features)
    labels = gen.permutation(np.arange(n_samples) % n_classes)
    features = means[labels] + gen.standard_normal((n_samples, n_features))
    return features, labels.astype(np.int64)


def partition_even(n_samples: int, n_devices: int, gen: np.random.Generator) -> list:
    """Random near-even split of sample indices over devices."""
    if n_devices < 1 or n_devices > n_samples:
        raise ConfigError("device count must be in [1, S]")
    perm = gen.permutation(n_samples)
    return [np.sort(part) for part in np.array_split(perm, n_devices)]


def partition_by_class(labels: np.ndarray, n_devices: int, gen: np.random.Generator) -> list:
    """Non-i.i.d. split: sort by class, then slice into contiguous shards."""
    if n_devices < 1 or n_devices > len(labels):
        raise ConfigError("device count must be in [1, S]")
    order = np.argsort(labels, kind="stable")
    return [np.sort(part) for part in np.array_split(order, n_devices)]


def _read_exact(fh, n: int, path: str, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(
            f"{path}: truncated while reading {what} at byte offset {fh.tell() - len(buf)}: "
            f"expected {n} bytes, got {len(buf)}"
        )
    return buf


def read_idx_images(path: str) -> np.ndarray:
    """Parse a big-endian IDX image file into an (n, rows*cols) float array in [0, 1]."""
    with open(path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, path, "header"))
        if magic != IDX_MAGIC_IMAGES:
            raise FormatError(
                f"{path}: bad magic at byte offset 0: expected {IDX_MAGIC_IMAGES:#010x}, got {magic:#010x}"
            )
        raw = _read_exact(fh, n * rows * cols, path, f"{n} images of {rows}x{cols} pixels")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)
    return pixels.astype(float) / 255.0


def read_idx_labels(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, n = struct.unpack(">II", _read_exact(fh, 8, path, "header"))
        if magic != IDX_MAGIC_LABELS:
            raise FormatError(
                f"{path}: bad magic at byte offset 0: expected {IDX_MAGIC_LABELS:#010x}, got {magic:#010x}"
            )
        raw = _read_exact(fh, n, path, f"{n} labels")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def ingest_mnist(images_path: str, labels_path: str, limit: int | None = None) -> Dataset:
    """Load an IDX image/label pair into an unpartitioned dataset.

    ``limit`` keeps only the first samples, for desk-scale runs.
    """
    features = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if features.shape[0] != labels.shape[0]:
        raise FormatError(
            f"image/label count mismatch: {features.shape[0]} images vs {labels.shape[0]} labels"
        )
    if limit is not None:
        features = features[:limit]
        labels = labels[:limit]
    return Dataset(features, labels)
