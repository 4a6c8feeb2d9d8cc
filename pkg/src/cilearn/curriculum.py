"""Curriculum over the novel classes of a task: rank them by the cosine
similarity of their feature prototypes to the previously learned classes'
prototypes, then admit them into training in stages.

A class prototype is the mean penultimate-layer feature over that class's
samples. The default ordering is most-similar-first: concepts close to
prior knowledge are learned before dissimilar ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backbone import IncrementalModel, forward
from .data import TaskSet
from .numkit import cosine_similarity


@dataclass
class PrototypeTable:
    task_index: int
    prototypes: dict[int, np.ndarray]  # class_id -> mean feature vector
    class_counts: dict[int, int] = field(default_factory=dict)

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.prototypes)

    @property
    def feature_dim(self) -> int:
        return next(iter(self.prototypes.values())).shape[0]


@dataclass
class Curriculum:
    task_index: int
    ordered_classes: list[int]  # training admission order
    scores: dict[int, float]  # class_id -> best similarity to old classes
    anchor_map: dict[int, int]  # class_id -> most similar old class


@dataclass
class BatchPlan:
    """Per-epoch admitted new-class ids; replay is present in every epoch."""

    admitted: list[tuple[int, ...]]


def compute_prototypes(model: IncrementalModel, task: TaskSet) -> PrototypeTable:
    """Per-class mean of the model's penultimate features over the task's
    training samples."""
    prototypes: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for c in task.class_ids:
        idx = task.train.rows_of(c)
        if idx.size == 0:
            raise ValueError(f"class {c} has no samples to build a prototype from")
        features, _ = forward(model, task.train.x[idx])
        prototypes[c] = features.mean(axis=0)
        counts[c] = int(idx.size)
    return PrototypeTable(task_index=task.index, prototypes=prototypes, class_counts=counts)


def similarity_matrix(old: PrototypeTable, new: PrototypeTable) -> np.ndarray:
    """Cosine similarities, one row per old class and one column per new
    class, both in ascending class-id order."""
    if not old.prototypes or not new.prototypes:
        raise ValueError("both prototype tables must be nonempty")
    if old.feature_dim != new.feature_dim:
        raise ValueError(
            f"prototype dimension mismatch: old {old.feature_dim}, new {new.feature_dim}"
        )
    s = np.empty((len(old.prototypes), len(new.prototypes)))
    for r, old_id in enumerate(old.class_ids):
        for c, new_id in enumerate(new.class_ids):
            s[r, c] = cosine_similarity(old.prototypes[old_id], new.prototypes[new_id])
    return s


def generate_curriculum(
    similarity,
    new_class_ids,
    old_class_ids=None,
    most_similar_first: bool = True,
) -> Curriculum:
    """Order the new classes by their best similarity to any old class.

    Each new class scores max over old classes of its similarity column;
    the anchor is the old class attaining that max. Ties in the ordering
    break by ascending class id. Columns follow ascending new class id,
    matching similarity_matrix.
    """
    s = np.asarray(similarity, dtype=np.float64)
    if s.size == 0:
        raise ValueError("similarity matrix is empty")
    ids = sorted(int(c) for c in new_class_ids)
    if s.shape[1] != len(ids):
        raise ValueError(
            f"similarity has {s.shape[1]} columns for {len(ids)} new classes"
        )
    if old_class_ids is None:
        old_ids = list(range(s.shape[0]))
    else:
        old_ids = sorted(int(c) for c in old_class_ids)
        if len(old_ids) != s.shape[0]:
            raise ValueError(
                f"similarity has {s.shape[0]} rows for {len(old_ids)} old classes"
            )
    scores = {c: float(s[:, j].max()) for j, c in enumerate(ids)}
    anchors = {c: old_ids[int(s[:, j].argmax())] for j, c in enumerate(ids)}
    sign = -1.0 if most_similar_first else 1.0
    ordered = sorted(ids, key=lambda c: (sign * scores[c], c))
    return Curriculum(
        task_index=0, ordered_classes=ordered, scores=scores, anchor_map=anchors
    )


def schedule_batches(
    curriculum: Curriculum, task: TaskSet, epochs: int, phase_fraction: float
) -> BatchPlan:
    """Staged admission: over the first ceil(phase_fraction * epochs)
    epochs, curriculum ranks enter the mix evenly spaced (rank 1 first);
    the remaining epochs use all classes."""
    if not 0 < phase_fraction <= 1:
        raise ValueError(f"phase_fraction must be in (0, 1], got {phase_fraction}")
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    order = curriculum.ordered_classes
    missing = set(order) - set(task.class_ids)
    if missing:
        raise ValueError(f"curriculum classes {sorted(missing)} are not in the task")
    k = len(order)
    phase_epochs = math.ceil(phase_fraction * epochs)
    admitted = []
    for epoch in range(1, epochs + 1):
        if epoch <= phase_epochs:
            n_admitted = math.ceil(k * epoch / phase_epochs)
            admitted.append(tuple(order[:n_admitted]))
        else:
            admitted.append(tuple(order))
    return BatchPlan(admitted=admitted)
