"""End-to-end stream driver and benchmark.

Protocol per run: stream 1 trains with cross-entropy only; every later
stream freezes the previous model as teacher, appends a k-unit head,
optionally orders the new classes into a curriculum, trains on new data
mixed with replayed exemplars under cross-entropy plus the distillation
regularizer, selects exemplars from the just-trained features, fine-tunes
on a class-balanced mix, absorbs the exemplars, and evaluates on every
seen task's test split.

Metrics follow the usual incremental-learning conventions: per-stream
overall accuracy on all seen classes, average of those from stream 2
onward, and forgetting as max historical accuracy per old task minus its
current accuracy, averaged over old tasks.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .backbone import (
    IncrementalModel,
    backward,
    build_model,
    clone_frozen,
    expand_head,
    forward,
    init_optimizer,
    step,
)
from .curriculum import (
    BatchPlan,
    PrototypeTable,
    compute_prototypes,
    generate_curriculum,
    schedule_batches,
    similarity_matrix,
)
from .data import (
    DatasetDescriptor,
    FeatureBatch,
    TaskSet,
    TaskStream,
    build_stream,
    generate_synthetic,
)
from .losses import total_loss
from .memory import ReplayMemory, absorb, serve_balanced, serve_training_mix
from .numkit import derive_seed, rng
from .subset import random_selection, select_exemplars


@dataclass
class StreamConfig:
    """Everything a run needs; maps one-to-one onto the flat config file."""

    classes_per_task: int = 2
    samples_per_class: int = 100
    epsilon: float = 0.3
    temperature: float = 2.0
    epochs: int = 40
    finetune_epochs: int = 30
    learning_rate: float = 1e-3
    finetune_learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    optimizer: str = "adam"
    batch_size: int = 32
    curriculum_enabled: bool = True
    iss_enabled: bool = True
    seed: int = 0
    dataset: str = "synthetic"  # "synthetic" or a dataset file path
    synthetic_classes: int = 10
    synthetic_dim: int = 16
    synthetic_separation: float = 4.0
    trunk_hidden: int = 64
    feature_dim: int = 128
    phase_fraction: float = 0.5
    prototype_history: str = "previous_task"  # or "all_tasks"
    curriculum_order: str = "most_similar_first"  # or "least_similar_first"
    selection_criterion: str = "distance"  # or "entropy"
    finetune_scope: str = "heads_only"  # or "full"
    regularizer_weight: float = 1.0

    def validate(self) -> None:
        if self.classes_per_task < 1:
            raise ValueError("classes_per_task must be >= 1")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.epochs < 1 or self.finetune_epochs < 0:
            raise ValueError("epochs must be >= 1 and finetune_epochs >= 0")
        if not 0 < self.phase_fraction <= 1:
            raise ValueError("phase_fraction must be in (0, 1]")
        choices = {
            "optimizer": ("adam", "sgd"),
            "prototype_history": ("previous_task", "all_tasks"),
            "curriculum_order": ("most_similar_first", "least_similar_first"),
            "selection_criterion": ("entropy", "distance"),
            "finetune_scope": ("heads_only", "full"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")

    def descriptor(self) -> DatasetDescriptor:
        if self.dataset == "synthetic":
            return generate_synthetic(
                classes=self.synthetic_classes,
                samples=self.samples_per_class,
                dim=self.synthetic_dim,
                separation=self.synthetic_separation,
                seed=derive_seed(self.seed, "dataset"),
            )
        return DatasetDescriptor(kind="file", path=self.dataset)


@dataclass
class StreamMetrics:
    """Accuracy matrix and derived measures for one completed run.

    per_task_accuracy[t-1][j-1] is the accuracy on task j's test split
    after finishing stream t (defined for j <= t).
    """

    class_order: list[int] = field(default_factory=list)
    task_class_ids: list[list[int]] = field(default_factory=list)
    per_task_accuracy: list[list[float]] = field(default_factory=list)
    test_sizes: list[int] = field(default_factory=list)
    overall_accuracy: list[float] = field(default_factory=list)
    forgetting: list[float | None] = field(default_factory=list)
    stream_seconds: list[float] = field(default_factory=list)
    curriculum_log: list[dict | None] = field(default_factory=list)
    selection_log: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def n_streams(self) -> int:
        return len(self.per_task_accuracy)


def average_incremental_accuracy(metrics: StreamMetrics) -> float:
    """Mean overall accuracy from stream 2 onward; stream 1 is excluded
    because it is not incremental."""
    if len(metrics.overall_accuracy) < 2:
        raise ValueError("average incremental accuracy needs at least 2 streams")
    return float(np.mean(metrics.overall_accuracy[1:]))


def forgetting_measure(metrics: StreamMetrics, t: int) -> float:
    """Mean over old tasks of (best historical accuracy - current accuracy)
    after stream t; negative when old tasks improved."""
    if t < 2 or t > metrics.n_streams:
        raise ValueError(f"forgetting is defined for 2 <= t <= {metrics.n_streams}, got {t}")
    gaps = []
    for j in range(1, t):
        history = max(metrics.per_task_accuracy[l - 1][j - 1] for l in range(j, t))
        gaps.append(history - metrics.per_task_accuracy[t - 1][j - 1])
    return float(np.mean(gaps))


def _encode_labels(labels: np.ndarray, label_index: dict[int, int]) -> np.ndarray:
    return np.array([label_index[int(c)] for c in labels], dtype=np.int64)


def _train_phase(
    model: IncrementalModel,
    teacher: IncrementalModel | None,
    data: FeatureBatch,
    label_index: dict[int, int],
    config: StreamConfig,
    epochs: int,
    learning_rate: float,
    scope: str,
    plan: BatchPlan | None,
    new_class_ids: list[int],
    seed: int,
) -> None:
    """Minibatch training on one phase's data mix.

    With a batch plan, a new class's samples join the mix only from the
    epoch its curriculum rank is admitted; replayed old classes are present
    in every epoch.
    """
    old_width = teacher.output_dim if teacher is not None else 0
    optimizer = init_optimizer(
        model, config.optimizer, learning_rate, config.weight_decay, scope
    )
    y_encoded = _encode_labels(data.y, label_index)
    new_set = set(new_class_ids)
    for epoch in range(1, epochs + 1):
        if plan is not None:
            admitted = set(plan.admitted[epoch - 1])
            keep = np.array(
                [c not in new_set or c in admitted for c in data.y], dtype=bool
            )
            rows = np.nonzero(keep)[0]
        else:
            rows = np.arange(data.n)
        if rows.size == 0:
            continue
        order = rows[rng(derive_seed(seed, "epoch", epoch)).permutation(rows.size)]
        for start in range(0, order.size, config.batch_size):
            batch = order[start : start + config.batch_size]
            x = data.x[batch]
            _, logits = forward(model, x)
            teacher_logits = forward(teacher, x)[1] if teacher is not None else None
            breakdown = total_loss(
                logits,
                y_encoded[batch],
                teacher_logits,
                old_width,
                config.temperature,
                config.regularizer_weight,
            )
            grads = backward(model, x, breakdown.grad_wrt_logits)
            step(optimizer, model, grads)


def _evaluate(
    model: IncrementalModel,
    tasks: list[TaskSet],
    label_index: dict[int, int],
) -> tuple[list[float], float]:
    accuracies = []
    correct = 0
    total = 0
    for task in tasks:
        _, logits = forward(model, task.test.x)
        predictions = logits.argmax(axis=1)
        truth = _encode_labels(task.test.y, label_index)
        hits = int((predictions == truth).sum())
        accuracies.append(hits / task.test.n)
        correct += hits
        total += task.test.n
    return accuracies, correct / total


def _merge_prototype_history(tables: list[PrototypeTable], mode: str) -> PrototypeTable:
    if mode == "previous_task":
        return tables[-1]
    merged: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for table in tables:
        merged.update(table.prototypes)
        counts.update(table.class_counts)
    return PrototypeTable(
        task_index=tables[-1].task_index, prototypes=merged, class_counts=counts
    )


def run_stream(config: StreamConfig, stream: TaskStream) -> StreamMetrics:
    """Run the full incremental protocol over a prepared task stream."""
    config.validate()
    k = config.classes_per_task
    for task in stream.tasks:
        if len(task.class_ids) != k:
            raise ValueError(
                f"stream {task.index}: task has {len(task.class_ids)} classes, "
                f"config expects {k}"
            )
    label_index = {c: i for i, c in enumerate(stream.class_order)}
    seed = config.seed
    model = build_model(
        stream.input_dim,
        k,
        hidden=(config.trunk_hidden,),
        feature_dim=config.feature_dim,
        seed=derive_seed(seed, "model"),
    )
    memory = ReplayMemory(epsilon=config.epsilon)
    prototype_history: list[PrototypeTable] = []
    metrics = StreamMetrics(class_order=list(stream.class_order), config=asdict(config))

    for task in stream.tasks:
        t = task.index
        started = time.perf_counter()
        teacher = clone_frozen(model) if t > 1 else None
        expand_head(model, k, derive_seed(seed, "head", t))

        plan = None
        curriculum_record = None
        if t > 1 and config.curriculum_enabled:
            new_table = compute_prototypes(teacher, task)
            old_table = _merge_prototype_history(
                prototype_history, config.prototype_history
            )
            similarity = similarity_matrix(old_table, new_table)
            curriculum = generate_curriculum(
                similarity,
                task.class_ids,
                old_table.class_ids,
                most_similar_first=(config.curriculum_order == "most_similar_first"),
            )
            curriculum.task_index = t
            plan = schedule_batches(curriculum, task, config.epochs, config.phase_fraction)
            curriculum_record = {
                "task": t,
                "ordered_classes": curriculum.ordered_classes,
                "scores": {str(c): curriculum.scores[c] for c in curriculum.ordered_classes},
                "anchors": {str(c): curriculum.anchor_map[c] for c in curriculum.ordered_classes},
            }

        if t == 1:
            mix = task.train
        else:
            mix = serve_training_mix(memory, task, derive_seed(seed, "mix", t))
        _train_phase(
            model,
            teacher,
            mix,
            label_index,
            config,
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            scope="all",
            plan=plan,
            new_class_ids=task.class_ids,
            seed=derive_seed(seed, "train", t),
        )

        # Exemplar selection runs on the freshly trained (pre-fine-tune)
        # feature space; the raw rows behind the kept indices go to memory.
        features, _ = forward(model, task.train.x)
        if config.iss_enabled:
            selection = select_exemplars(
                features,
                task.train.y,
                config.epsilon,
                seed=derive_seed(seed, "select", t),
                criterion=config.selection_criterion,
            )
        else:
            selection = random_selection(
                task.train.y, config.epsilon, seed=derive_seed(seed, "select", t)
            )
        selection_record = {
            "task": t,
            "method": config.selection_criterion if config.iss_enabled else "random",
            "kept": {str(c): selection.kept[c] for c in sorted(selection.kept)},
            "kept_scores": {
                str(c): [selection.scores.get(i) for i in selection.kept[c]]
                for c in sorted(selection.kept)
            }
            if selection.scores
            else {},
            "inertia": selection.inertia,
        }

        if t > 1 and config.finetune_epochs > 0:
            balanced = serve_balanced(memory, task, derive_seed(seed, "balanced", t))
            _train_phase(
                model,
                teacher,
                balanced,
                label_index,
                config,
                epochs=config.finetune_epochs,
                learning_rate=config.finetune_learning_rate,
                scope="heads_only" if config.finetune_scope == "heads_only" else "all",
                plan=None,
                new_class_ids=task.class_ids,
                seed=derive_seed(seed, "finetune", t),
            )

        absorb(memory, selection, task)
        if config.curriculum_enabled:
            prototype_history.append(compute_prototypes(model, task))

        per_task, overall = _evaluate(model, stream.tasks[:t], label_index)
        metrics.task_class_ids.append(list(task.class_ids))
        metrics.per_task_accuracy.append(per_task)
        metrics.overall_accuracy.append(overall)
        metrics.curriculum_log.append(curriculum_record)
        metrics.selection_log.append(selection_record)
        metrics.forgetting.append(forgetting_measure(metrics, t) if t > 1 else None)
        metrics.stream_seconds.append(time.perf_counter() - started)
    metrics.test_sizes = [task.test.n for task in stream.tasks]
    return metrics


def run(config: StreamConfig) -> tuple[StreamMetrics, TaskStream]:
    """Build the stream described by the config and run it."""
    stream = build_stream(
        config.descriptor(), config.classes_per_task, derive_seed(config.seed, "stream")
    )
    return run_stream(config, stream), stream


def ablation_arms(flags: tuple[str, ...] = ("curriculum", "iss")) -> list[dict[str, bool]]:
    """All on/off combinations of the requested components, full method first."""
    for flag in flags:
        if flag not in ("curriculum", "iss"):
            raise ValueError(f"unknown ablation flag {flag!r}")
    arms: list[dict[str, bool]] = [{}]
    for flag in flags:
        arms = [dict(arm, **{flag: value}) for value in (True, False) for arm in arms]
    arms.sort(key=lambda arm: sum(not v for v in arm.values()))
    return arms


def arm_name(arm: dict[str, bool]) -> str:
    if all(arm.values()):
        return "full"
    return "_".join(f"no-{flag}" for flag, on in arm.items() if not on) or "full"


def run_ablation(
    config: StreamConfig, flags: tuple[str, ...] = ("curriculum", "iss")
) -> dict[str, StreamMetrics]:
    """Run every arm of the component grid on one shared stream."""
    stream = build_stream(
        config.descriptor(), config.classes_per_task, derive_seed(config.seed, "stream")
    )
    results: dict[str, StreamMetrics] = {}
    for arm in ablation_arms(flags):
        arm_config = replace(
            config,
            curriculum_enabled=arm.get("curriculum", config.curriculum_enabled),
            iss_enabled=arm.get("iss", config.iss_enabled),
        )
        results[arm_name(arm)] = run_stream(arm_config, stream)
    return results


def run_memory_sweep(
    config: StreamConfig, epsilons: list[float]
) -> dict[float, StreamMetrics]:
    """Re-run one shared stream at each requested retention fraction."""
    stream = build_stream(
        config.descriptor(), config.classes_per_task, derive_seed(config.seed, "stream")
    )
    results: dict[float, StreamMetrics] = {}
    for epsilon in epsilons:
        if not 0 < epsilon <= 1:
            raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
        results[float(epsilon)] = run_stream(replace(config, epsilon=epsilon), stream)
    return results
