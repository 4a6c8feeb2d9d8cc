"""Trainable classifier: shared feedforward trunk, fixed-width penultimate
feature layer, and a stack of per-task linear heads appended over time.

Gradients are exact reverse-mode derivatives, no autograd framework. The
teacher used for distillation is a frozen deep copy of the previous model.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .numkit import rng

ACTIVATIONS = ("relu", "identity")

CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    """One dense layer: y = x @ W.T + b, optionally ReLU-activated."""

    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class IncrementalModel:
    trunk: list[Layer]
    heads: list[Layer] = field(default_factory=list)
    classes_per_head: int = 0
    frozen: bool = False
    seed_lineage: list[int] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.trunk[0].in_dim

    @property
    def feature_dim(self) -> int:
        return self.trunk[-1].out_dim

    @property
    def head_count(self) -> int:
        return len(self.heads)

    @property
    def output_dim(self) -> int:
        return sum(h.out_dim for h in self.heads)

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (trunk first, then heads)."""
        params: list[np.ndarray] = []
        for layer in self.trunk + self.heads:
            params.append(layer.weights)
            params.append(layer.bias)
        return params


@dataclass
class ParameterGradients:
    trunk: list[tuple[np.ndarray, np.ndarray]]
    heads: list[tuple[np.ndarray, np.ndarray]]

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in self.trunk + self.heads:
            out.append(w)
            out.append(b)
        return out


def _glorot_uniform(generator: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    return generator.uniform(-limit, limit, size=(out_dim, in_dim))


def build_model(
    input_dim: int,
    classes_per_head: int,
    hidden: tuple[int, ...] = (64,),
    feature_dim: int = 128,
    seed: int = 0,
) -> IncrementalModel:
    """New headless model: input -> hidden ReLU layers -> feature layer.

    Heads are added per task with expand_head. Weights are Glorot-uniform,
    biases zero.
    """
    generator = rng(seed)
    dims = [input_dim, *hidden, feature_dim]
    trunk = []
    for i in range(len(dims) - 1):
        activation = "relu" if i < len(dims) - 2 else "identity"
        trunk.append(
            Layer(
                weights=_glorot_uniform(generator, dims[i + 1], dims[i]),
                bias=np.zeros(dims[i + 1]),
                activation=activation,
            )
        )
    return IncrementalModel(
        trunk=trunk,
        classes_per_head=classes_per_head,
        seed_lineage=[int(seed)],
    )


def expand_head(model: IncrementalModel, k: int, seed: int) -> IncrementalModel:
    """Append one k-unit head; existing parameters are left untouched."""
    if k < 1:
        raise ValueError(f"head size must be >= 1, got {k}")
    if model.frozen:
        raise ValueError("cannot expand a frozen model")
    generator = rng(seed)
    model.heads.append(
        Layer(
            weights=_glorot_uniform(generator, k, model.feature_dim),
            bias=np.zeros(k),
            activation="identity",
        )
    )
    model.classes_per_head = k
    model.seed_lineage.append(int(seed))
    return model


def _trunk_forward(model: IncrementalModel, x: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-layer (pre-activation, post-activation) caches, input included."""
    caches = [(x, x)]
    h = x
    for i, layer in enumerate(model.trunk):
        if h.shape[1] != layer.in_dim:
            raise ValueError(
                f"trunk layer {i} expects {layer.in_dim} inputs, got {h.shape[1]}"
            )
        z = h @ layer.weights.T + layer.bias
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        caches.append((z, h))
    return caches


def forward(model: IncrementalModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Run a batch through the network.

    Returns (features, logits): features from the penultimate layer, logits
    as the concatenation of every head's output in head order.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    features = _trunk_forward(model, x)[-1][1]
    if model.heads:
        logits = np.concatenate(
            [features @ h.weights.T + h.bias for h in model.heads], axis=1
        )
    else:
        logits = np.zeros((x.shape[0], 0))
    return features, logits


def backward(model: IncrementalModel, x, grad_wrt_logits) -> ParameterGradients:
    """Exact gradients of sum(logits * grad_wrt_logits) for every parameter."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    grad_wrt_logits = np.asarray(grad_wrt_logits, dtype=np.float64)
    if grad_wrt_logits.shape != (x.shape[0], model.output_dim):
        raise ValueError(
            f"gradient shape {grad_wrt_logits.shape} does not match logits "
            f"shape {(x.shape[0], model.output_dim)}"
        )
    caches = _trunk_forward(model, x)
    features = caches[-1][1]

    head_grads: list[tuple[np.ndarray, np.ndarray]] = []
    d_features = np.zeros_like(features)
    col = 0
    for head in model.heads:
        g = grad_wrt_logits[:, col : col + head.out_dim]
        head_grads.append((g.T @ features, g.sum(axis=0)))
        d_features += g @ head.weights
        col += head.out_dim

    trunk_grads: list[tuple[np.ndarray, np.ndarray]] = []
    dh = d_features
    for i in range(len(model.trunk) - 1, -1, -1):
        layer = model.trunk[i]
        z, _ = caches[i + 1]
        dz = dh * (z > 0) if layer.activation == "relu" else dh
        layer_input = caches[i][1]
        trunk_grads.append((dz.T @ layer_input, dz.sum(axis=0)))
        dh = dz @ layer.weights
    trunk_grads.reverse()
    return ParameterGradients(trunk=trunk_grads, heads=head_grads)


def clone_frozen(model: IncrementalModel) -> IncrementalModel:
    """Deep copy that optimizer steps refuse to touch; the teacher."""
    clone = copy.deepcopy(model)
    clone.frozen = True
    return clone


@dataclass
class OptimizerState:
    method: str = "adam"  # "adam" or "sgd"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    scope: str = "all"  # "all" or "heads_only"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


def init_optimizer(
    model: IncrementalModel,
    method: str = "adam",
    learning_rate: float = 1e-3,
    weight_decay: float = 0.0,
    scope: str = "all",
) -> OptimizerState:
    if method not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer method {method!r}")
    if scope not in ("all", "heads_only"):
        raise ValueError(f"unknown optimizer scope {scope!r}")
    params = model.parameters()
    return OptimizerState(
        method=method,
        learning_rate=learning_rate,
        weight_decay=weight_decay,
        scope=scope,
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
    )


def step(
    state: OptimizerState, model: IncrementalModel, grads: ParameterGradients
) -> tuple[IncrementalModel, OptimizerState]:
    """One update with decoupled weight decay; increments step_count.

    With scope "heads_only" the trunk is skipped entirely (no gradient
    update and no decay).
    """
    if model.frozen:
        raise ValueError("cannot step a frozen model")
    params = model.parameters()
    grad_arrays = grads.arrays()
    if len(params) != len(grad_arrays):
        raise ValueError(
            f"gradient count {len(grad_arrays)} does not match parameter "
            f"count {len(params)}"
        )
    n_trunk_arrays = 2 * len(model.trunk)
    state.step_count += 1
    lr = state.learning_rate
    for i, (p, g) in enumerate(zip(params, grad_arrays)):
        if p.shape != g.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter shape {p.shape}"
            )
        if state.scope == "heads_only" and i < n_trunk_arrays:
            continue
        if state.method == "sgd":
            update = lr * g
        else:
            m = state.first_moment[i]
            v = state.second_moment[i]
            m *= state.beta1
            m += (1 - state.beta1) * g
            v *= state.beta2
            v += (1 - state.beta2) * g * g
            m_hat = m / (1 - state.beta1**state.step_count)
            v_hat = v / (1 - state.beta2**state.step_count)
            update = lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        p -= update
        if state.weight_decay:
            p -= lr * state.weight_decay * p
    return model, state


def save_checkpoint(
    path,
    model: IncrementalModel,
    replay: dict[int, np.ndarray] | None = None,
) -> None:
    """Write a versioned checkpoint that round-trips bit-exactly.

    The optional replay payload maps class id -> stored sample rows, so a
    run can resume with its replay store intact.
    """
    meta = {
        "version": CHECKPOINT_VERSION,
        "classes_per_head": model.classes_per_head,
        "trunk_activations": [layer.activation for layer in model.trunk],
        "n_trunk": len(model.trunk),
        "n_heads": len(model.heads),
        "seed_lineage": model.seed_lineage,
        "replay_classes": sorted(int(c) for c in replay) if replay else [],
    }
    arrays: dict[str, np.ndarray] = {}
    for i, layer in enumerate(model.trunk):
        arrays[f"trunk_{i}_w"] = layer.weights
        arrays[f"trunk_{i}_b"] = layer.bias
    for i, layer in enumerate(model.heads):
        arrays[f"head_{i}_w"] = layer.weights
        arrays[f"head_{i}_b"] = layer.bias
    if replay:
        for class_id, rows in replay.items():
            arrays[f"replay_{int(class_id)}"] = np.asarray(rows, dtype=np.float64)
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> tuple[IncrementalModel, dict[int, np.ndarray]]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        trunk = [
            Layer(
                weights=data[f"trunk_{i}_w"],
                bias=data[f"trunk_{i}_b"],
                activation=meta["trunk_activations"][i],
            )
            for i in range(meta["n_trunk"])
        ]
        heads = [
            Layer(weights=data[f"head_{i}_w"], bias=data[f"head_{i}_b"])
            for i in range(meta["n_heads"])
        ]
        replay = {
            class_id: data[f"replay_{class_id}"] for class_id in meta["replay_classes"]
        }
    model = IncrementalModel(
        trunk=trunk,
        heads=heads,
        classes_per_head=meta["classes_per_head"],
        seed_lineage=list(meta["seed_lineage"]),
    )
    return model, replay
