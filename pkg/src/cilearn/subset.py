"""Informative exemplar selection: cluster the current task's features with
k-means (one cluster per class), score every sample by its soft cluster
membership, and keep the floor(epsilon * N) most reliable samples per
class, pruning boundary points and outliers.

Two rankings are available. "distance" keeps the samples nearest their
class's own cluster centroid, the literal pruning rule (default).
"entropy" keeps the samples whose membership distribution over all
centroids has the lowest entropy; note that for well-separated clusters
this ranks by the margin to the rival centroid rather than by centrality.
Either way a sample that falls into another class's cluster scores as
far from its own class and is pruned early.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numkit import derive_seed, entropy_rows, rng


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (k, dim)
    assignments: np.ndarray  # (n,) cluster index per sample
    inertia: float  # total squared distance to assigned centroids
    inertia_history: list[float] = field(default_factory=list)
    seed: int = 0


@dataclass
class SelectionResult:
    kept: dict[int, list[int]]  # class_id -> kept row indices (into features)
    scores: dict[int, float]  # row index -> membership entropy
    inertia: float = 0.0


def _pairwise_sq_dist(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = features[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(
    features: np.ndarray, k: int, generator: np.random.Generator
) -> np.ndarray:
    n = features.shape[0]
    centroids = np.empty((k, features.shape[1]))
    centroids[0] = features[generator.integers(n)]
    closest = ((features - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            pick = int(generator.integers(n))  # all points coincide
        else:
            pick = int(generator.choice(n, p=closest / total))
        centroids[i] = features[pick]
        closest = np.minimum(closest, ((features - centroids[i]) ** 2).sum(axis=1))
    return centroids


def kmeans(
    features, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-6
) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when the largest centroid shift drops below tol or max_iter is
    reached. Empty clusters are re-seeded from the point farthest from its
    assigned centroid. Inertia is recorded after each assignment step and
    is non-increasing.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-d, got shape {features.shape}")
    n = features.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"{n} rows cannot form {k} clusters")
    generator = rng(seed)
    centroids = _kmeans_pp_init(features, k, generator)
    history: list[float] = []
    assignments = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _pairwise_sq_dist(features, centroids)
        assignments = d2.argmin(axis=1)
        history.append(float(d2[np.arange(n), assignments].sum()))
        new_centroids = centroids.copy()
        for j in range(k):
            members = assignments == j
            if members.any():
                new_centroids[j] = features[members].mean(axis=0)
            else:
                farthest = int(d2[np.arange(n), assignments].argmax())
                new_centroids[j] = features[farthest]
        shift = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        if shift < tol:
            break
    d2 = _pairwise_sq_dist(features, centroids)
    assignments = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), assignments].sum())
    history.append(inertia)
    return ClusterModel(
        centroids=centroids,
        assignments=assignments,
        inertia=inertia,
        inertia_history=history,
        seed=seed,
    )


def best_kmeans(
    features,
    k: int,
    seed: int = 0,
    n_init: int = 5,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> ClusterModel:
    """Best of n_init seeded runs by final inertia."""
    best = None
    for i in range(n_init):
        model = kmeans(features, k, seed=derive_seed(seed, "init", i), max_iter=max_iter, tol=tol)
        if best is None or model.inertia < best.inertia:
            best = model
    return best


def membership_rows(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Row-wise soft membership: p_l proportional to exp(-||x - c_l||^2),
    max-shifted before exponentiation."""
    features = np.asarray(features, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if features.shape[1] != centroids.shape[1]:
        raise ValueError(
            f"dimension mismatch: features {features.shape[1]}, "
            f"centroids {centroids.shape[1]}"
        )
    logits = -_pairwise_sq_dist(features, centroids)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def membership_probabilities(feature, centroids) -> np.ndarray:
    """Soft cluster membership of a single feature vector."""
    feature = np.asarray(feature, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if centroids.ndim != 2 or centroids.shape[0] < 1:
        raise ValueError("need at least one centroid")
    return membership_rows(feature.reshape(1, -1), centroids)[0]


def entropy_scores(features, centroids) -> np.ndarray:
    """Per-sample entropy of the membership vector, each in [0, ln k]."""
    features = np.asarray(features, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if features.size == 0 or centroids.size == 0:
        raise ValueError("features and centroids must be nonempty")
    return entropy_rows(membership_rows(features, centroids))


def select_exemplars(
    features,
    labels,
    epsilon: float,
    seed: int = 0,
    criterion: str = "distance",
    n_init: int = 5,
) -> SelectionResult:
    """Keep the floor(epsilon * N_c) most informative samples per class.

    Clusters all features jointly with k = number of distinct labels, then
    keeps per class the samples closest to the class's own cluster
    centroid (criterion "distance", default) or the lowest-entropy samples
    (criterion "entropy"). Ties break by the other criterion, then by row
    index.
    """
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
    if criterion not in ("entropy", "distance"):
        raise ValueError(f"unknown selection criterion {criterion!r}")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] != labels.shape[0]:
        raise ValueError(
            f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
        )
    class_ids = np.unique(labels)
    if any((labels == c).sum() < 1 for c in class_ids) or class_ids.size == 0:
        raise ValueError("every class needs at least one sample")
    k = int(class_ids.size)
    clusters = best_kmeans(features, k, seed=seed, n_init=n_init)
    scores = entropy_scores(features, clusters.centroids)
    d2 = _pairwise_sq_dist(features, clusters.centroids)

    kept: dict[int, list[int]] = {}
    for c in class_ids:
        idx = np.nonzero(labels == c)[0]
        # The class's own cluster is the one holding most of its samples;
        # distances are measured against that centroid, so a sample sitting
        # in a rival class's cluster ranks as far, not near.
        class_cluster = int(np.bincount(clusters.assignments[idx], minlength=k).argmax())
        class_dist = d2[idx, class_cluster]
        budget = math.floor(epsilon * idx.size)
        if criterion == "entropy":
            order = np.lexsort((idx, class_dist, scores[idx]))
        else:
            order = np.lexsort((idx, scores[idx], class_dist))
        kept[int(c)] = [int(i) for i in idx[order[:budget]]]
    return SelectionResult(
        kept=kept,
        scores={int(i): float(s) for i, s in enumerate(scores)},
        inertia=clusters.inertia,
    )


def random_selection(labels, epsilon: float, seed: int = 0) -> SelectionResult:
    """Seeded uniform-random pick at the same per-class budget; the control
    arm when informative selection is ablated."""
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
    labels = np.asarray(labels, dtype=np.int64)
    generator = rng(seed)
    kept: dict[int, list[int]] = {}
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        budget = math.floor(epsilon * idx.size)
        pick = generator.choice(idx.size, size=budget, replace=False)
        kept[int(c)] = sorted(int(idx[i]) for i in pick)
    return SelectionResult(kept=kept, scores={})
