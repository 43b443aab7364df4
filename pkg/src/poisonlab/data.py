"""Labeled datasets: loaders, synthesis, stratified splits.

All datasets are stored class-sorted (samples ranked by class index) with a
retained permutation back to the original file order. Feature values live in
[0, 1]; loaders scale raw bytes by 1/255.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    CountMismatchError,
    EmptyInputError,
    LabelRangeError,
    RecordSizeError,
    StratifyError,
    TruncatedFileError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073


@dataclass(frozen=True)
class LabeledDataset:
    """Class-sorted collection of feature vectors with integer labels.

    inputs[i] is a float64 vector in [0,1]^d; labels are ascending, so each
    class occupies one contiguous block addressable via class_offsets.
    orig_index[i] gives the position sample i held in the pre-sort order.
    """

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    class_counts: np.ndarray = field(repr=False)
    class_offsets: np.ndarray = field(repr=False)
    orig_index: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.inputs, self.labels, self.class_counts,
                    self.class_offsets, self.orig_index):
            arr.flags.writeable = False

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def class_block(self, k: int) -> slice:
        start = int(self.class_offsets[k])
        return slice(start, start + int(self.class_counts[k]))

    def mask_to_original_order(self, mask: np.ndarray) -> np.ndarray:
        """Report a class-sorted-aligned mask in the original file order."""
        out = np.zeros_like(mask)
        out[self.orig_index] = mask
        return out

    def mask_from_original_order(self, mask: np.ndarray) -> np.ndarray:
        return np.asarray(mask)[self.orig_index]

    def to_csv(self, path) -> None:
        """Write `label,f0,f1,...` rows in class-sorted order."""
        with open(path, "w") as fh:
            for x, y in zip(self.inputs, self.labels):
                fh.write(str(int(y)) + ","
                         + ",".join(repr(float(v)) for v in x) + "\n")

    @staticmethod
    def from_csv(path) -> "LabeledDataset":
        labels, rows = [], []
        with open(path) as fh:
            for line in fh:
                parts = line.strip().split(",")
                if not parts or parts == [""]:
                    continue
                labels.append(int(parts[0]))
                rows.append([float(v) for v in parts[1:]])
        if not rows:
            raise EmptyInputError(f"no rows in {path}")
        return from_arrays(np.array(rows, dtype=np.float64),
                           np.array(labels, dtype=np.int64))


def from_arrays(inputs: np.ndarray, labels: np.ndarray,
                num_classes: int | None = None) -> LabeledDataset:
    """Build a class-sorted dataset from arrays in arbitrary order.

    Sorting is stable on (class, original index), so ties keep file order.
    """
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if inputs.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{inputs.shape[0]} inputs vs {labels.shape[0]} labels")
    if inputs.size and (inputs.min() < 0.0 or inputs.max() > 1.0):
        raise ValueError("feature values must lie in [0, 1]")
    K = int(num_classes) if num_classes is not None else int(labels.max()) + 1
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise LabelRangeError(f"labels outside [0, {K})")
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=K).astype(np.int64)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
    return LabeledDataset(
        inputs=inputs[order].copy(),
        labels=labels[order].copy(),
        num_classes=K,
        class_counts=counts,
        class_offsets=offsets,
        orig_index=order.copy(),
    )


def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"{path}: expected {n} bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load an IDX image/label file pair (big-endian headers, raw bytes)."""
    with open(images_path, "rb") as fh:
        magic, n_img, rows, cols = struct.unpack(
            ">IIII", _read_exact(fh, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagicError(f"{images_path}: magic 0x{magic:08x}")
        pixels = np.frombuffer(
            _read_exact(fh, n_img * rows * cols, images_path), dtype=np.uint8)
    with open(labels_path, "rb") as fh:
        magic, n_lab = struct.unpack(">II", _read_exact(fh, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise BadMagicError(f"{labels_path}: magic 0x{magic:08x}")
        labels = np.frombuffer(_read_exact(fh, n_lab, labels_path),
                               dtype=np.uint8)
    if n_img != n_lab:
        raise CountMismatchError(f"{n_img} images vs {n_lab} labels")
    inputs = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    return from_arrays(inputs, labels.astype(np.int64))


def load_cifar_binary(paths, num_classes: int = 10) -> LabeledDataset:
    """Load CIFAR-10 style binary files (1 label byte + 3072 pixel bytes)."""
    if not paths:
        raise EmptyInputError("no CIFAR binary files given")
    labels, images = [], []
    for path in paths:
        raw = Path(path).read_bytes()
        if len(raw) % CIFAR_RECORD_BYTES != 0:
            raise RecordSizeError(
                f"{path}: {len(raw)} bytes is not a multiple of {CIFAR_RECORD_BYTES}")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(rec[:, 0].astype(np.int64))
        images.append(rec[:, 1:].astype(np.float64) / 255.0)
    labels = np.concatenate(labels)
    if labels.size and labels.max() >= num_classes:
        raise LabelRangeError(f"label byte {labels.max()} >= {num_classes}")
    return from_arrays(np.concatenate(images), labels, num_classes=num_classes)


def synth_blobs(num_classes: int, per_class: int, dim: int,
                spread: float, seed: int) -> LabeledDataset:
    """Gaussian clusters with unit-separated means, clipped to [0,1]^d.

    Class k peaks at 0.8 on coordinates j with j % K == k and sits at 0.2
    elsewhere, so any two means are ~unit apart for d >= 2K.
    """
    if num_classes < 2 or per_class < 1 or dim < 2:
        raise ValueError("need num_classes >= 2, per_class >= 1, dim >= 2")
    rng = np.random.default_rng(seed)
    means = np.full((num_classes, dim), 0.2)
    for k in range(num_classes):
        means[k, np.arange(dim) % num_classes == k] = 0.8
    xs, ys = [], []
    for k in range(num_classes):
        pts = means[k] + rng.normal(0.0, spread, size=(per_class, dim))
        xs.append(np.clip(pts, 0.0, 1.0))
        ys.append(np.full(per_class, k, dtype=np.int64))
    return from_arrays(np.concatenate(xs), np.concatenate(ys),
                       num_classes=num_classes)


def split(ds: LabeledDataset, test_fraction: float,
          seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified per-class split; both halves class-sorted and seeded."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    tr_x, tr_y, te_x, te_y = [], [], [], []
    for k in range(ds.num_classes):
        blk = ds.class_block(k)
        n_k = blk.stop - blk.start
        n_test = int(round(test_fraction * n_k))
        if n_test < 1 or n_test > n_k - 1:
            raise StratifyError(
                f"class {k} with {n_k} samples cannot keep both sides nonempty")
        perm = rng.permutation(n_k)
        test_idx = np.sort(perm[:n_test])
        train_idx = np.sort(perm[n_test:])
        tr_x.append(ds.inputs[blk][train_idx])
        tr_y.append(np.full(len(train_idx), k, dtype=np.int64))
        te_x.append(ds.inputs[blk][test_idx])
        te_y.append(np.full(n_test, k, dtype=np.int64))
    train = from_arrays(np.concatenate(tr_x), np.concatenate(tr_y),
                        num_classes=ds.num_classes)
    test = from_arrays(np.concatenate(te_x), np.concatenate(te_y),
                       num_classes=ds.num_classes)
    return train, test
