"""Dataset loading, synthetic generators, standardization, batching and k-fold plans.

Files are consumed locally only:

- labeled CSV, one sample per row, label in the last column by default
  (MIT-BIH beat CSVs: 187 samples + label per row);
- "DSR1" raw image container, little-endian:
    magic b"DSR1" | u32 N | u32 C | u32 H | u32 W | u32 class_count
    | N × u8 labels | N·C·H·W × u8 pixels (row-major per image)

1-D signals are fed to conv networks as N×1×1×D images (`as_signal_images`),
so 1×k kernels stand in for 1-D convolutions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np
import pandas as pd

from .errors import DatasetError


RAW_MAGIC = b"DSR1"
RAW_HEADER = struct.Struct("<4s5I")
STD_FLOOR = 1e-12

LabelColumn = Union[str, int]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features N×D or N×C×H×W (float64) with integer labels."""
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise DatasetError(
                f"{self.name}: {self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if self.class_count < 2:
            raise DatasetError(f"{self.name}: class_count must be at least 2, got {self.class_count}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DatasetError(f"{self.name}: labels outside [0, {self.class_count})")

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_shape(self) -> tuple[int, ...]:
        return tuple(self.features.shape[1:])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def subset(self, indices: np.ndarray, name: Optional[str] = None) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.class_count, name or self.name)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.class_count, self.name)

    def as_signal_images(self) -> "Dataset":
        """N×D rows → N×1×1×D single-channel one-row images."""
        if self.features.ndim != 2:
            raise DatasetError(f"{self.name}: expected N×D features, got {self.features.shape}")
        return self.with_features(self.features.reshape(self.size, 1, 1, -1))


# =============================================================================
# CSV
# =============================================================================


def load_csv(
    path: Path,
    label_column: LabelColumn = "last",
    skip_header: bool = False,
    class_count: Optional[int] = None,
    name: Optional[str] = None,
) -> Dataset:
    """Read a comma-separated labeled file into an N×D dataset."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: file not found")
    try:
        frame = pd.read_csv(
            path,
            header=None,
            skiprows=1 if skip_header else 0,
            dtype=str,
            skip_blank_lines=True,
        )
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: file is empty") from None
    except pd.errors.ParserError as e:
        raise DatasetError(f"{path}: ragged rows ({e})") from None
    if frame.empty:
        raise DatasetError(f"{path}: file has no data rows")

    row_offset = 1 if skip_header else 0
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        row = int(np.argmax(missing))
        raise DatasetError(f"{path}: row {row + row_offset} is ragged (expected {frame.shape[1]} cells)")

    matrix = _parse_cells(path, frame, row_offset)
    width = matrix.shape[1]
    index = width - 1 if label_column == "last" else int(label_column)
    if not 0 <= index < width:
        raise DatasetError(f"{path}: label column {label_column} outside {width} columns")
    raw_labels = matrix[:, index]
    if np.any(raw_labels < 0) or np.any(raw_labels != np.round(raw_labels)):
        row = int(np.argmax((raw_labels < 0) | (raw_labels != np.round(raw_labels))))
        raise DatasetError(f"{path}: label {raw_labels[row]} at row {row + row_offset} is not a nonnegative integer")
    labels = raw_labels.astype(np.int64)
    features = np.delete(matrix, index, axis=1)

    if class_count is None:
        class_count = max(2, int(labels.max()) + 1)
    elif labels.max() >= class_count:
        row = int(np.argmax(labels >= class_count))
        raise DatasetError(f"{path}: label {labels[row]} at row {row + row_offset} outside [0, {class_count})")
    return Dataset(features, labels, int(class_count), name or path.stem)


def _is_finite_number(cell: str) -> bool:
    try:
        return bool(np.isfinite(float(cell)))
    except ValueError:
        return False


def _parse_cells(path: Path, frame: pd.DataFrame, row_offset: int) -> np.ndarray:
    """Correctly rounded float parse; the first bad cell is reported by row and column."""
    stripped = frame.apply(lambda col: col.str.strip())
    try:
        matrix = stripped.astype(np.float64).to_numpy()
    except ValueError:
        bad = ~stripped.apply(lambda col: col.map(_is_finite_number)).to_numpy(dtype=bool)
    else:
        bad = ~np.isfinite(matrix)
        if not bad.any():
            return matrix
    row, col = (int(i[0]) for i in np.nonzero(bad))
    raise DatasetError(
        f"{path}: non-numeric cell {frame.iat[row, col]!r} at row {row + row_offset}, column {col}"
    )


def write_csv(dataset: Dataset, path: Path) -> Path:
    """Flat features followed by the label, no header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.features.reshape(dataset.size, -1))
    frame[frame.shape[1]] = dataset.labels
    frame.to_csv(path, header=False, index=False, float_format="%.17g")
    return path


# =============================================================================
# RAW IMAGE CONTAINER
# =============================================================================


def load_raw_images(path: Path, name: Optional[str] = None) -> Dataset:
    """Decode a DSR1 container; pixels are scaled to [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: file not found")
    payload = path.read_bytes()
    if len(payload) < RAW_HEADER.size:
        raise DatasetError(
            f"{path}: truncated header, expected {RAW_HEADER.size} bytes, got {len(payload)}"
        )
    magic, n, c, h, w, class_count = RAW_HEADER.unpack_from(payload)
    if magic != RAW_MAGIC:
        raise DatasetError(f"{path}: bad magic {magic!r}, expected {RAW_MAGIC!r}")

    pixel_count = n * c * h * w
    expected = RAW_HEADER.size + n + pixel_count
    if len(payload) < expected:
        raise DatasetError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(payload)} "
            f"({expected - len(payload)} missing)"
        )
    labels = np.frombuffer(payload, dtype=np.uint8, count=n, offset=RAW_HEADER.size).astype(np.int64)
    pixels = np.frombuffer(payload, dtype=np.uint8, count=pixel_count, offset=RAW_HEADER.size + n)
    features = pixels.reshape(n, c, h, w).astype(np.float64) / 255.0
    if n and labels.max() >= class_count:
        row = int(np.argmax(labels >= class_count))
        raise DatasetError(f"{path}: label {labels[row]} of image {row} outside [0, {class_count})")
    return Dataset(features, labels, int(class_count), name or path.stem)


def write_raw_images(dataset: Dataset, path: Path) -> Path:
    """Encode an N×C×H×W dataset with features in [0, 1] as a DSR1 container."""
    if dataset.features.ndim != 4:
        raise DatasetError(f"{dataset.name}: DSR1 needs N×C×H×W features, got {dataset.features.shape}")
    if dataset.features.min(initial=0.0) < 0 or dataset.features.max(initial=0.0) > 1:
        raise DatasetError(f"{dataset.name}: DSR1 pixels must lie in [0, 1]")
    if dataset.class_count > 256:
        raise DatasetError(f"{dataset.name}: DSR1 stores labels as u8, got {dataset.class_count} classes")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, c, h, w = dataset.features.shape
    pixels = np.rint(dataset.features * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(RAW_HEADER.pack(RAW_MAGIC, n, c, h, w, dataset.class_count))
        f.write(dataset.labels.astype(np.uint8).tobytes())
        f.write(pixels.tobytes())
    return path


# =============================================================================
# SYNTHETIC DATA
# =============================================================================


def blob_means(classes: int, dim: int) -> np.ndarray:
    """Distinct class centres: ±unit axis vectors, growing in scale once axes run out."""
    means = np.zeros((classes, dim))
    for cls in range(classes):
        axis = cls % dim
        sign = 1.0 if (cls // dim) % 2 == 0 else -1.0
        means[cls, axis] = sign * (1 + cls // (2 * dim))
    return means


def synth_blobs(
    classes: int,
    per_class: int,
    dim: int,
    spread: float,
    seed: int,
) -> Dataset:
    """Isotropic Gaussian blobs with standard deviation `spread` around `blob_means`."""
    if classes < 2:
        raise DatasetError(f"synth_blobs needs at least 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    means = blob_means(classes, dim)
    features = np.concatenate(
        [means[cls] + spread * rng.standard_normal((per_class, dim)) for cls in range(classes)]
    )
    labels = np.repeat(np.arange(classes), per_class)
    return Dataset(features, labels, classes, f"blobs_{classes}x{per_class}")


def synth_spirals(
    classes: int,
    per_class: int,
    noise: float,
    seed: int,
) -> Dataset:
    """Interleaved 2-D spiral arms, one per class, each sweeping four radians."""
    if classes < 2:
        raise DatasetError(f"synth_spirals needs at least 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    features = np.zeros((classes * per_class, 2))
    labels = np.repeat(np.arange(classes), per_class)
    radius = np.linspace(0.0, 1.0, per_class)
    for cls in range(classes):
        theta = np.linspace(cls * 4.0, (cls + 1) * 4.0, per_class)
        theta = theta + noise * rng.standard_normal(per_class)
        rows = slice(cls * per_class, (cls + 1) * per_class)
        features[rows, 0] = radius * np.sin(theta)
        features[rows, 1] = radius * np.cos(theta)
    return Dataset(features, labels, classes, f"spirals_{classes}x{per_class}")


# =============================================================================
# PREPROCESSING AND SPLITS
# =============================================================================


def standardize(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Per-feature standardization with statistics from `train` only.

    Features whose train std is below 1e-12 are left untouched in every split.
    """
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    constant = std < STD_FLOOR
    mean = np.where(constant, 0.0, mean)
    std = np.where(constant, 1.0, std)
    return tuple(d.with_features((d.features - mean) / std) for d in (train, *others))


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Stratified assignment of every sample to one of k folds."""
    k: int
    assignments: np.ndarray
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train indices, validation indices) for `fold`."""
        if not 0 <= fold < self.k:
            raise DatasetError(f"fold {fold} outside [0, {self.k})")
        return np.flatnonzero(self.assignments != fold), np.flatnonzero(self.assignments == fold)

    def folds(self) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
        for fold in range(self.k):
            train_idx, val_idx = self.split(fold)
            yield fold, train_idx, val_idx


def kfold(d: Dataset, k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified k-fold plan: per-class fold counts differ by at most one."""
    if k < 2:
        raise DatasetError(f"k must be at least 2, got {k}")
    counts = d.class_counts()
    for cls, count in enumerate(counts):
        if 0 < count < k:
            raise DatasetError(f"class {cls} has {count} samples, fewer than k={k} folds")

    rng = np.random.default_rng(seed)
    assignments = np.empty(d.size, dtype=np.int64)
    offset = 0
    for cls in range(d.class_count):
        members = np.flatnonzero(d.labels == cls)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        # rotate the starting fold so remainders spread across folds
        assignments[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def batches(
    d: Dataset,
    batch_size: int,
    seed: int,
    epoch: int,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Shuffled mini-batches covering every sample once; the last may be short.

    The permutation is drawn from the (seed, epoch) seed sequence.
    """
    if batch_size < 1:
        raise DatasetError(f"batch_size must be at least 1, got {batch_size}")
    order = np.random.default_rng([seed, epoch]).permutation(d.size)
    for start in range(0, d.size, batch_size):
        index = order[start:start + batch_size]
        yield d.features[index], d.labels[index]
