"""Replay store for previously learned classes.

The store keeps raw input samples, never features: features drift as the
model trains, so they are re-extracted with the current model whenever the
exemplars are served. Absorption is append-only and a class can only be
absorbed once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import FeatureBatch, TaskSet
from .numkit import rng
from .subset import SelectionResult


@dataclass
class ReplayMemory:
    epsilon: float
    per_class: dict[int, np.ndarray] = field(default_factory=dict)
    introduced_at: dict[int, int] = field(default_factory=dict)

    @property
    def classes(self) -> list[int]:
        return sorted(self.per_class)

    @property
    def total_count(self) -> int:
        return sum(rows.shape[0] for rows in self.per_class.values())

    def is_empty(self) -> bool:
        return not self.per_class


def absorb(memory: ReplayMemory, selection: SelectionResult, task: TaskSet) -> ReplayMemory:
    """Store the selected raw samples of each of the task's classes."""
    if sorted(selection.kept) != sorted(task.class_ids):
        raise ValueError(
            f"selection classes {sorted(selection.kept)} do not match task "
            f"classes {sorted(task.class_ids)}"
        )
    for c in task.class_ids:
        if c in memory.per_class:
            raise ValueError(f"class {c} is already stored in replay memory")
    for c in task.class_ids:
        indices = selection.kept[c]
        budget = math.floor(memory.epsilon * task.train.rows_of(c).size)
        if len(indices) > budget:
            raise ValueError(
                f"class {c}: {len(indices)} exemplars exceed the budget {budget}"
            )
        memory.per_class[c] = task.train.x[np.asarray(indices, dtype=np.int64)].copy()
        memory.introduced_at[c] = task.index
    return memory


def _check_no_overlap(memory: ReplayMemory, task: TaskSet) -> None:
    overlap = sorted(set(task.class_ids) & set(memory.per_class))
    if overlap:
        raise ValueError(
            f"task classes {overlap} are already in replay memory; exemplars "
            "must come from strictly earlier streams"
        )


def serve_training_mix(memory: ReplayMemory, task: TaskSet, seed: int) -> FeatureBatch:
    """All new-task samples plus every stored exemplar, shuffled by seed."""
    _check_no_overlap(memory, task)
    xs = [task.train.x]
    ys = [task.train.y]
    for c in memory.classes:
        rows = memory.per_class[c]
        xs.append(rows)
        ys.append(np.full(rows.shape[0], c, dtype=np.int64))
    x = np.concatenate(xs, axis=0)
    y = np.concatenate(ys)
    order = rng(seed).permutation(x.shape[0])
    return FeatureBatch(x[order], y[order])


def serve_balanced(memory: ReplayMemory, task: TaskSet, seed: int) -> FeatureBatch:
    """Class-balanced fine-tuning mix: every class, old and new, contributes
    the same number of samples.

    The common count is the smallest availability across old stored classes
    and new task classes; old classes normally contribute all their
    exemplars while new classes are uniformly subsampled down to match.
    """
    if memory.is_empty():
        raise ValueError("replay memory is empty; balanced serving needs old classes")
    _check_no_overlap(memory, task)
    availability = [memory.per_class[c].shape[0] for c in memory.classes]
    availability += [task.train.rows_of(c).size for c in task.class_ids]
    target = min(availability)
    if target < 1:
        raise ValueError("a class has no samples available for balanced serving")
    generator = rng(seed)
    xs = []
    ys = []
    for c in memory.classes:
        rows = memory.per_class[c]
        if rows.shape[0] > target:
            pick = generator.choice(rows.shape[0], size=target, replace=False)
            rows = rows[np.sort(pick)]
        xs.append(rows)
        ys.append(np.full(target, c, dtype=np.int64))
    for c in task.class_ids:
        idx = task.train.rows_of(c)
        pick = generator.choice(idx.size, size=target, replace=False)
        xs.append(task.train.x[idx[np.sort(pick)]])
        ys.append(np.full(target, c, dtype=np.int64))
    x = np.concatenate(xs, axis=0)
    y = np.concatenate(ys)
    order = generator.permutation(x.shape[0])
    return FeatureBatch(x[order], y[order])
