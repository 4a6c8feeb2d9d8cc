"""Small dense-math and randomness helpers shared by every other module.

All arithmetic is 64-bit float on numpy arrays. Functions validate their
inputs and raise ValueError with a message naming the offending argument.
"""

from __future__ import annotations

import zlib

import numpy as np

_SEED_MASK = 0xFFFFFFFF


def rng(seed: int) -> np.random.Generator:
    """Deterministic generator; the single entry point for randomness."""
    return np.random.default_rng(seed)


def derive_seed(seed: int, *parts: int | str) -> int:
    """Stable child seed for a tagged sub-stream of randomness.

    Same (seed, parts) always gives the same child, across processes and
    platforms, so every stochastic stage of a run can be replayed alone.
    """
    keys = [int(seed) & _SEED_MASK]
    for part in parts:
        if isinstance(part, str):
            keys.append(zlib.crc32(part.encode("utf-8")) & _SEED_MASK)
        else:
            keys.append(int(part) & _SEED_MASK)
    return int(np.random.SeedSequence(keys).generate_state(1, dtype=np.uint64)[0])


def as_float_array(x, name: str = "array") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, in [-1, 1] up to rounding."""
    a = as_float_array(a, "a")
    b = as_float_array(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: a has {a.shape}, b has {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0:
        raise ValueError("cosine_similarity: first argument 'a' has zero norm")
    if norm_b == 0.0:
        raise ValueError("cosine_similarity: second argument 'b' has zero norm")
    return float(a @ b / (norm_a * norm_b))


def softmax(z, temperature: float = 1.0) -> np.ndarray:
    """Temperature softmax over the last axis, max-shifted for overflow safety.

    softmax(z, T) is computed literally as softmax(z / T, 1), so scaling the
    temperature and pre-dividing the logits are the same code path.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = as_float_array(z, "z") / float(temperature)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(p) -> float:
    """Shannon entropy (natural log) of a probability vector; 0*ln 0 == 0."""
    p = as_float_array(p, "p")
    if np.any(p < 0):
        raise ValueError("entropy: probabilities must be non-negative")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"entropy: probabilities sum to {total!r}, expected 1")
    return float(entropy_rows(p.reshape(1, -1))[0])


def entropy_rows(p: np.ndarray) -> np.ndarray:
    """Row-wise entropy of a matrix of probability vectors (no validation)."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def squared_distance(a, b) -> float:
    """Squared Euclidean distance between two vectors."""
    a = as_float_array(a, "a")
    b = as_float_array(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: a has {a.shape}, b has {b.shape}")
    diff = a - b
    return float(diff @ diff)
