"""Dataset ingestion and the deterministic synthetic evaluation rig.

Supports the IDX image/label pair format and CIFAR-10 binary batches, plus
a generator that fabricates a class-structured blob dataset together with
a matched classifier fitted in closed form (random hidden features, ridge
least squares on one-hot targets) -- no training loop anywhere.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .classifier import BuiltinClassifier, Dense, Flatten, NetworkDescription, ReLU, Softmax
from .core import LabeledSample
from .engine import TAG_SUBSET, substream
from .errors import FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073  # 1 label byte + 3*32*32 pixel bytes


@dataclass(frozen=True)
class Dataset:
    name: str
    images: np.ndarray  # (N, C, H, W) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError("images must be a (N, C, H, W) array")
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels disagree on sample count")
        if len(self.images) and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        if np.any(self.labels < 0) or np.any(self.labels >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(self.images[i], int(self.labels[i]))

    @property
    def digest(self) -> str:
        """Content hash over a canonical byte serialization (endianness pinned)."""
        h = hashlib.sha256()
        h.update(b"CCDS1")
        h.update(struct.pack("<5q", self.num_classes, *self.images.shape))
        h.update(self.images.astype("<f4").tobytes())
        h.update(self.labels.astype("<i8").tobytes())
        return h.hexdigest()

    def meta(self) -> dict:
        return {"name": self.name, "digest": self.digest,
                "count": len(self), "num_classes": self.num_classes}


def _read_be_u32s(buf: bytes, offset: int, count: int, path) -> tuple[int, ...]:
    if len(buf) < offset + 4 * count:
        raise FormatError(f"{path}: truncated header")
    return struct.unpack(f">{count}I", buf[offset:offset + 4 * count])


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair into a 1x28x28-style dataset."""
    with open(images_path, "rb") as f:
        raw = f.read()
    (magic,) = _read_be_u32s(raw, 0, 1, images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{images_path}: bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")
    count, rows, cols = _read_be_u32s(raw, 4, 3, images_path)
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise FormatError(f"{images_path}: expected {expected} bytes for {count} "
                          f"{rows}x{cols} images, found {len(raw)}")
    images = np.frombuffer(raw, dtype=np.uint8, offset=16).astype(np.float64) / 255.0
    images = images.reshape(count, 1, rows, cols)

    with open(labels_path, "rb") as f:
        raw = f.read()
    (magic,) = _read_be_u32s(raw, 0, 1, labels_path)
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"{labels_path}: bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")
    (label_count,) = _read_be_u32s(raw, 4, 1, labels_path)
    expected = 8 + label_count
    if len(raw) != expected:
        raise FormatError(f"{labels_path}: expected {expected} bytes for "
                          f"{label_count} labels, found {len(raw)}")
    if label_count != count:
        raise FormatError(f"count mismatch: {count} images vs {label_count} labels")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset("mnist", images, labels, num_classes=10)


def load_cifar10_bin(paths) -> Dataset:
    """Load one or more CIFAR-10 binary batches (3073-byte records)."""
    if isinstance(paths, (str, bytes)) or not hasattr(paths, "__iter__"):
        paths = [paths]
    all_images, all_labels = [], []
    for path in paths:
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD != 0:
            raise FormatError(f"{path}: size {len(raw)} is not a positive multiple of {CIFAR_RECORD}")
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        all_labels.append(records[:, 0].astype(np.int64))
        all_images.append(records[:, 1:].astype(np.float64).reshape(-1, 3, 32, 32) / 255.0)
    return Dataset("cifar10", np.concatenate(all_images), np.concatenate(all_labels),
                   num_classes=10)


def synthetic_dataset(seed: int, count: int = 100, shape: tuple[int, int, int] = (1, 8, 8),
                      num_classes: int = 3) -> tuple[Dataset, BuiltinClassifier]:
    """Deterministic blob dataset plus a matched classifier.

    Each class owns a blob position on a ring around the image center;
    samples jitter the position and amplitude over low-level noise.  The
    classifier (Flatten, Dense(32), ReLU, Dense(K), Softmax) is fitted by
    ridge least squares on random hidden features, with logits scaled so
    clean predictions are confident.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    C, H, W = shape
    rng = substream(seed, 100)  # generation stream, distinct from run-time tags

    # round-robin labels guarantee balance, then a fixed permutation mixes order
    labels = np.arange(count, dtype=np.int64) % num_classes
    labels = labels[rng.permutation(count)]

    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    ring = min(H, W) / 3.0
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = np.stack([cy + ring * np.sin(angles), cx + ring * np.cos(angles)], axis=1)

    rows, cols = np.meshgrid(np.arange(H, dtype=np.float64),
                             np.arange(W, dtype=np.float64), indexing="ij")
    images = np.empty((count, C, H, W), dtype=np.float64)
    for i in range(count):
        r0, c0 = centers[labels[i]] + rng.uniform(-0.75, 0.75, size=2)
        amp = rng.uniform(0.6, 1.0)
        width2 = rng.uniform(1.2, 1.8) ** 2
        blob = amp * np.exp(-((rows - r0) ** 2 + (cols - c0) ** 2) / (2.0 * width2))
        noise = rng.uniform(0.0, 0.1, size=(C, H, W))
        images[i] = np.clip(noise + blob[None, :, :], 0.0, 1.0)

    dataset = Dataset("synthetic", images, labels, num_classes)
    model = _fit_matched_model(dataset, rng, hidden=32, logit_scale=30.0)
    return dataset, model


def _fit_matched_model(dataset: Dataset, rng: np.random.Generator,
                       hidden: int, logit_scale: float) -> BuiltinClassifier:
    C, H, W = dataset.images.shape[1:]
    D = C * H * W
    K = dataset.num_classes
    X = dataset.images.reshape(len(dataset), D)

    w1 = rng.normal(0.0, 1.0 / np.sqrt(D), size=(hidden, D))
    b1 = rng.normal(0.0, 0.1, size=hidden)
    feats = np.maximum(X @ w1.T + b1, 0.0)
    ones = np.ones((len(dataset), 1))
    A = np.hstack([feats, ones])
    Y = np.eye(K)[dataset.labels]
    # ridge least squares in closed form; no iterative training
    lam = 1e-3
    coef = np.linalg.solve(A.T @ A + lam * np.eye(A.shape[1]), A.T @ Y)
    w2 = coef[:-1].T * logit_scale
    b2 = coef[-1] * logit_scale

    net = NetworkDescription(
        input_shape=(C, H, W), num_classes=K,
        layers=(Flatten(), Dense(hidden), ReLU(), Dense(K), Softmax()))
    weights = {"layer1.weight": w1, "layer1.bias": b1,
               "layer3.weight": w2, "layer3.bias": b2}
    return BuiltinClassifier(net, weights)


def subset(dataset: Dataset, count: int, seed: int) -> Dataset:
    """Seeded sample without replacement; count = len gives a permuted full set."""
    if count > len(dataset):
        raise ValueError(f"cannot take {count} samples from {len(dataset)}")
    rng = substream(seed, TAG_SUBSET)
    idx = rng.permutation(len(dataset))[:count]
    return Dataset(dataset.name, dataset.images[idx], dataset.labels[idx],
                   dataset.num_classes)
