"""Datasets and task streams.

A dataset is a labeled batch of feature vectors, loaded either from a
delimited text file (one row per sample: label, f1, ..., fd) or from the
built-in synthetic Gaussian-blob generator. A stream partitions the
classes into consecutive tasks of k novel classes each, with a seeded
80/20 train/test split per class.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numkit import derive_seed, rng


@dataclass
class FeatureBatch:
    """Dense row-major feature vectors with per-row integer labels."""

    x: np.ndarray  # (n, dim) float64
    y: np.ndarray  # (n,) int64

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"inconsistent batch: x {self.x.shape}, y {self.y.shape}"
            )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def take(self, indices) -> "FeatureBatch":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureBatch(self.x[indices], self.y[indices])

    def rows_of(self, class_id: int) -> np.ndarray:
        return np.nonzero(self.y == class_id)[0]

    @staticmethod
    def concat(batches: list["FeatureBatch"]) -> "FeatureBatch":
        return FeatureBatch(
            np.concatenate([b.x for b in batches], axis=0),
            np.concatenate([b.y for b in batches], axis=0),
        )


@dataclass
class TaskSet:
    """One arrival of k novel classes with train and test splits."""

    index: int  # 1-based stream index
    class_ids: list[int]
    train: FeatureBatch
    test: FeatureBatch

    @property
    def train_counts(self) -> dict[int, int]:
        return {c: int((self.train.y == c).sum()) for c in self.class_ids}


@dataclass
class TaskStream:
    tasks: list[TaskSet]
    class_order: list[int]  # all stream classes, arrival order
    input_dim: int


@dataclass
class DatasetDescriptor:
    """Where a dataset comes from: a file path or synthetic parameters."""

    kind: str  # "synthetic" or "file"
    path: str | None = None
    classes: int | None = None
    samples: int | None = None
    dim: int | None = None
    separation: float | None = None
    seed: int | None = None

    def load(self) -> FeatureBatch:
        if self.kind == "file":
            return load_dataset_file(self.path)
        if self.kind == "synthetic":
            return synthesize(
                self.classes, self.samples, self.dim, self.separation, self.seed
            )
        raise ValueError(f"unknown dataset kind {self.kind!r}")


def generate_synthetic(
    classes: int, samples: int, dim: int, separation: float, seed: int
) -> DatasetDescriptor:
    """Descriptor for unit-variance Gaussian blobs, one per class.

    Class means sit on a seeded random orthonormal frame scaled so any two
    means are `separation` apart (frame directions are approximate when
    there are more classes than dimensions). separation = 0 collapses all
    classes onto the origin.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if dim < 2:
        raise ValueError(f"need at least 2 dimensions, got {dim}")
    if samples < 1:
        raise ValueError(f"need at least 1 sample per class, got {samples}")
    return DatasetDescriptor(
        kind="synthetic",
        classes=classes,
        samples=samples,
        dim=dim,
        separation=float(separation),
        seed=int(seed),
    )


def synthesize(
    classes: int, samples: int, dim: int, separation: float, seed: int
) -> FeatureBatch:
    generator = rng(seed)
    if classes <= dim:
        raw = generator.normal(size=(dim, classes))
        frame, _ = np.linalg.qr(raw)
        directions = frame.T  # (classes, dim) orthonormal rows
    else:
        raw = generator.normal(size=(classes, dim))
        directions = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    means = directions * (separation / np.sqrt(2.0))
    xs = []
    ys = []
    for c in range(classes):
        xs.append(means[c] + generator.normal(size=(samples, dim)))
        ys.append(np.full(samples, c, dtype=np.int64))
    return FeatureBatch(np.concatenate(xs, axis=0), np.concatenate(ys))


def load_dataset_file(path) -> FeatureBatch:
    """Read a delimited text dataset; header row optional.

    Format: one row per sample, comma separated, first field the
    non-negative integer label, remaining fields the feature values.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"cannot read dataset {path}: {exc}") from exc
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError(f"cannot read dataset {path}: file is empty")
    start = 0
    first = rows[0].split(",")
    try:
        float(first[0])
    except ValueError:
        start = 1  # header row
    if start == len(rows):
        raise ValueError(f"cannot read dataset {path}: no data rows")
    labels = []
    features = []
    width = None
    for lineno, row in enumerate(rows[start:], start=start + 1):
        fields = row.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise ValueError(
                f"cannot read dataset {path}: row {lineno} has {len(fields)} "
                f"fields, expected {width}"
            )
        try:
            label = int(fields[0])
            values = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise ValueError(f"cannot read dataset {path}: row {lineno}: {exc}") from exc
        if label < 0:
            raise ValueError(
                f"cannot read dataset {path}: row {lineno} has negative label {label}"
            )
        labels.append(label)
        features.append(values)
    if width is not None and width < 2:
        raise ValueError(f"cannot read dataset {path}: rows need a label and features")
    return FeatureBatch(np.array(features, dtype=np.float64), np.array(labels))


def write_dataset_file(path, batch: FeatureBatch) -> None:
    """Write the delimited text format; %.17g keeps float64 exact."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("label," + ",".join(f"f{i + 1}" for i in range(batch.dim)) + "\n")
        for label, row in zip(batch.y, batch.x):
            fh.write(str(int(label)) + "," + ",".join(f"{v:.17g}" for v in row) + "\n")


def build_stream(source: DatasetDescriptor, k: int, seed: int) -> TaskStream:
    """Partition the source's classes into tasks of k, in seeded random
    class order, with a seeded per-class 80/20 train/test split.

    Trailing classes that do not fill a task are dropped with a warning.
    """
    if k < 1:
        raise ValueError(f"classes per task must be >= 1, got {k}")
    batch = source.load()
    class_ids = np.unique(batch.y)
    order = rng(derive_seed(seed, "class-order")).permutation(len(class_ids))
    ordered = [int(class_ids[i]) for i in order]
    n_tasks = len(ordered) // k
    dropped = len(ordered) - n_tasks * k
    if dropped:
        warnings.warn(
            f"dropping {dropped} trailing class(es) that do not fill a task of {k}",
            stacklevel=2,
        )
        ordered = ordered[: n_tasks * k]
    if n_tasks == 0:
        raise ValueError(f"{len(class_ids)} classes cannot form a task of {k}")

    train_idx: dict[int, np.ndarray] = {}
    test_idx: dict[int, np.ndarray] = {}
    for c in ordered:
        idx = batch.rows_of(c)
        perm = rng(derive_seed(seed, "split", c)).permutation(len(idx))
        idx = idx[perm]
        n_train = int(round(0.8 * len(idx)))
        n_train = min(max(n_train, 1), len(idx) - 1) if len(idx) > 1 else len(idx)
        train_idx[c] = idx[:n_train]
        test_idx[c] = idx[n_train:]

    tasks = []
    for t in range(n_tasks):
        ids = ordered[t * k : (t + 1) * k]
        tr = np.concatenate([train_idx[c] for c in ids])
        te = np.concatenate([test_idx[c] for c in ids])
        tasks.append(
            TaskSet(index=t + 1, class_ids=ids, train=batch.take(tr), test=batch.take(te))
        )
    return TaskStream(tasks=tasks, class_order=ordered, input_dim=batch.dim)
