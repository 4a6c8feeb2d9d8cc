import copy
import hashlib
import math

import numpy as np
import pytest

from cilearn.backbone import (
    IncrementalModel,
    Layer,
    backward,
    build_model,
    clone_frozen,
    expand_head,
    forward,
    init_optimizer,
    load_checkpoint,
    save_checkpoint,
    step,
)
from cilearn.losses import total_loss
from cilearn.numkit import rng


def identity_model(dim: int, heads: int = 1) -> IncrementalModel:
    """Trunk = identity, each head = identity; logits echo the input."""
    model = IncrementalModel(
        trunk=[Layer(np.eye(dim), np.zeros(dim), "identity")],
        classes_per_head=dim,
    )
    for _ in range(heads):
        model.heads.append(Layer(np.eye(dim), np.zeros(dim), "identity"))
    return model


def random_model(seed: int, input_dim=3, hidden=(5,), feature_dim=4, heads=2, k=2):
    model = build_model(input_dim, k, hidden=hidden, feature_dim=feature_dim, seed=seed)
    for i in range(heads):
        expand_head(model, k, seed=seed + 100 + i)
    return model


class TestForward:
    def test_identity_composition(self):
        model = identity_model(2)
        _, logits = forward(model, np.array([[1.0, 2.0]]))
        np.testing.assert_array_equal(logits, [[1.0, 2.0]])

    def test_empty_batch(self):
        model = random_model(0, heads=3, k=2)
        features, logits = forward(model, np.zeros((0, 3)))
        assert features.shape == (0, 4)
        assert logits.shape == (0, 6)

    def test_relu_layer(self):
        model = IncrementalModel(
            trunk=[Layer(np.array([[1.0], [-1.0]]), np.zeros(2), "relu")],
            classes_per_head=2,
        )
        features, _ = forward(model, np.array([[2.0]]))
        np.testing.assert_array_equal(features, [[2.0, 0.0]])

    def test_deterministic(self):
        model = random_model(5)
        x = rng(1).normal(size=(4, 3))
        f1, l1 = forward(model, x)
        f2, l2 = forward(model, x)
        assert np.array_equal(f1, f2) and np.array_equal(l1, l2)

    def test_dimension_mismatch_names_layer(self):
        model = random_model(5)
        with pytest.raises(ValueError, match="trunk layer 0"):
            forward(model, np.zeros((2, 7)))


class TestExpandHead:
    def test_output_dim_grows(self):
        model = build_model(8, 5, seed=0)
        for i in range(2):
            expand_head(model, 5, seed=i)
        assert model.output_dim == 10
        expand_head(model, 5, seed=9)
        assert model.head_count == 3
        assert model.output_dim == 15

    def test_existing_parameters_untouched(self):
        model = random_model(3)
        before = [p.copy() for p in model.parameters()]
        expand_head(model, 2, seed=77)
        for old, new in zip(before, model.parameters()):
            assert np.array_equal(old, new)

    def test_same_seed_same_weights(self):
        m1 = build_model(8, 4, seed=0)
        m2 = build_model(8, 4, seed=0)
        expand_head(m1, 4, seed=123)
        expand_head(m2, 4, seed=123)
        assert np.array_equal(m1.heads[0].weights, m2.heads[0].weights)

    def test_uniform_init_mean(self):
        # 100x100 head gives 1e4 draws from uniform(-L, L); the sample mean
        # should fall within 3 sigma of zero, sigma = L / sqrt(3 * n).
        model = build_model(4, 100, hidden=(4,), feature_dim=100, seed=0)
        expand_head(model, 100, seed=2024)
        w = model.heads[0].weights
        limit = math.sqrt(6.0 / 200)
        assert abs(w.mean()) < 3 * limit / math.sqrt(3 * w.size)
        assert np.abs(w).max() <= limit

    def test_bad_k(self):
        with pytest.raises(ValueError):
            expand_head(build_model(4, 2, seed=0), 0, seed=0)


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        model = random_model(7)
        x = rng(2).normal(size=(4, 3))
        grads = backward(model, x, np.zeros((4, model.output_dim)))
        for g in grads.arrays():
            assert np.all(g == 0.0)

    def test_single_linear_layer_outer_product(self):
        model = IncrementalModel(
            trunk=[Layer(np.eye(3), np.zeros(3), "identity")],
            heads=[Layer(rng(0).normal(size=(2, 3)), np.zeros(2), "identity")],
            classes_per_head=2,
        )
        x = rng(1).normal(size=(1, 3))
        upstream = rng(2).normal(size=(1, 2))
        grads = backward(model, x, upstream)
        np.testing.assert_allclose(grads.heads[0][0], np.outer(upstream[0], x[0]))
        np.testing.assert_allclose(grads.heads[0][1], upstream[0])

    def test_shape_mismatch(self):
        model = random_model(7)
        with pytest.raises(ValueError, match="gradient shape"):
            backward(model, np.zeros((4, 3)), np.zeros((4, 1)))

    def test_matches_finite_differences(self):
        # Scalar objective sum(logits * G) for fixed G; central differences
        # h=1e-5 over every parameter of a 2-layer model, 8 samples.
        model = random_model(11, input_dim=4, hidden=(6,), feature_dim=5, heads=2, k=3)
        g = rng(3)
        x = g.normal(size=(8, 4))
        upstream = g.normal(size=(8, model.output_dim))
        analytic = backward(model, x, upstream).arrays()

        def objective():
            _, logits = forward(model, x)
            return float((logits * upstream).sum())

        h = 1e-5
        for p, a in zip(model.parameters(), analytic):
            fd = np.zeros_like(p)
            it = np.nditer(p, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = p[idx]
                p[idx] = orig + h
                up = objective()
                p[idx] = orig - h
                down = objective()
                p[idx] = orig
                fd[idx] = (up - down) / (2 * h)
                it.iternext()
            rel = np.linalg.norm(a - fd) / max(np.linalg.norm(a), np.linalg.norm(fd), 1e-8)
            assert rel < 1e-4


class TestTotalLossGradientThroughNetwork:
    def test_parameter_gradients_match_finite_differences(self):
        # Full chain: network forward -> total loss -> backward, checked
        # against central differences on random small models.
        for trial in range(5):
            g = rng(100 + trial)
            k = int(g.integers(2, 4))
            heads = int(g.integers(1, 3))
            model = random_model(
                trial,
                input_dim=int(g.integers(2, 5)),
                hidden=(int(g.integers(3, 8)),),
                feature_dim=int(g.integers(3, 8)),
                heads=heads,
                k=k,
            )
            teacher_width = k * (heads - 1)
            n = int(g.integers(2, 8))
            x = g.normal(size=(n, model.input_dim))
            labels = g.integers(0, model.output_dim, size=n)
            teacher_logits = g.normal(size=(n, teacher_width))

            def loss_value():
                _, logits = forward(model, x)
                return total_loss(logits, labels, teacher_logits, teacher_width, 2.0).total

            _, logits = forward(model, x)
            breakdown = total_loss(logits, labels, teacher_logits, teacher_width, 2.0)
            analytic = backward(model, x, breakdown.grad_wrt_logits).arrays()

            h = 1e-5
            for p, a in zip(model.parameters(), analytic):
                fd = np.zeros_like(p)
                it = np.nditer(p, flags=["multi_index"])
                while not it.finished:
                    idx = it.multi_index
                    orig = p[idx]
                    p[idx] = orig + h
                    up = loss_value()
                    p[idx] = orig - h
                    down = loss_value()
                    p[idx] = orig
                    fd[idx] = (up - down) / (2 * h)
                    it.iternext()
                rel = np.linalg.norm(a - fd) / max(
                    np.linalg.norm(a), np.linalg.norm(fd), 1e-8
                )
                assert rel < 1e-4


class TestStep:
    def _one_param_model(self, w: float) -> IncrementalModel:
        return IncrementalModel(
            trunk=[Layer(np.array([[w]]), np.zeros(1), "identity")],
            classes_per_head=1,
        )

    def test_sgd_arithmetic(self):
        model = self._one_param_model(1.0)
        state = init_optimizer(model, "sgd", learning_rate=0.1, weight_decay=0.0)
        grads_trunk = [(np.array([[1.0]]), np.zeros(1))]
        from cilearn.backbone import ParameterGradients

        step(state, model, ParameterGradients(trunk=grads_trunk, heads=[]))
        assert model.trunk[0].weights[0, 0] == pytest.approx(0.9)
        assert state.step_count == 1

    def test_zero_gradient_keeps_parameters(self):
        model = random_model(1)
        before = [p.copy() for p in model.parameters()]
        state = init_optimizer(model, "adam", 0.1, weight_decay=0.0)
        zero = backward(model, np.zeros((1, 3)), np.zeros((1, model.output_dim)))
        step(state, model, zero)
        for old, new in zip(before, model.parameters()):
            assert np.array_equal(old, new)

    def test_adam_descends_quadratic(self):
        # f(w) = w^2 from w=1 at lr=0.05 reaches |w| < 0.1 within 500 steps.
        model = self._one_param_model(1.0)
        state = init_optimizer(model, "adam", learning_rate=0.05, weight_decay=0.0)
        from cilearn.backbone import ParameterGradients

        for _ in range(500):
            w = model.trunk[0].weights[0, 0]
            grads = ParameterGradients(trunk=[(np.array([[2 * w]]), np.zeros(1))], heads=[])
            step(state, model, grads)
            if abs(model.trunk[0].weights[0, 0]) < 0.1:
                break
        assert abs(model.trunk[0].weights[0, 0]) < 0.1

    def test_decoupled_weight_decay(self):
        model = self._one_param_model(1.0)
        state = init_optimizer(model, "sgd", learning_rate=0.1, weight_decay=0.5)
        from cilearn.backbone import ParameterGradients

        step(state, model, ParameterGradients(trunk=[(np.zeros((1, 1)), np.zeros(1))], heads=[]))
        assert model.trunk[0].weights[0, 0] == pytest.approx(1.0 - 0.1 * 0.5)

    def test_heads_only_scope_freezes_trunk(self):
        model = random_model(2)
        trunk_before = [layer.weights.copy() for layer in model.trunk]
        heads_before = [head.weights.copy() for head in model.heads]
        state = init_optimizer(model, "sgd", 0.1, weight_decay=0.1, scope="heads_only")
        x = rng(0).normal(size=(4, 3))
        grads = backward(model, x, np.ones((4, model.output_dim)))
        step(state, model, grads)
        for before, layer in zip(trunk_before, model.trunk):
            assert np.array_equal(before, layer.weights)
        assert any(
            not np.array_equal(before, head.weights)
            for before, head in zip(heads_before, model.heads)
        )
        assert state.step_count == 1

    def test_parameters_stay_finite(self):
        model = random_model(4)
        state = init_optimizer(model, "adam", 1e-2, weight_decay=1e-4)
        g = rng(9)
        for _ in range(50):
            x = g.normal(size=(6, 3))
            grads = backward(model, x, g.normal(size=(6, model.output_dim)))
            step(state, model, grads)
        for p in model.parameters():
            assert np.all(np.isfinite(p))


class TestCloneFrozen:
    def test_clone_equals_original(self):
        model = random_model(6)
        teacher = clone_frozen(model)
        for a, b in zip(model.parameters(), teacher.parameters()):
            assert np.array_equal(a, b)

    def test_teacher_unchanged_by_student_training(self):
        model = random_model(6)
        teacher = clone_frozen(model)
        x = rng(4).normal(size=(5, 3))
        logits_before = forward(teacher, x)[1].copy()
        state = init_optimizer(model, "adam", 1e-2)
        g = rng(5)
        for _ in range(10):
            grads = backward(model, x, g.normal(size=(5, model.output_dim)))
            step(state, model, grads)
        np.testing.assert_array_equal(forward(teacher, x)[1], logits_before)

    def test_stepping_frozen_model_fails(self):
        teacher = clone_frozen(random_model(6))
        state = init_optimizer(teacher, "sgd", 0.1)
        x = np.zeros((1, 3))
        grads = backward(teacher, x, np.zeros((1, teacher.output_dim)))
        with pytest.raises(ValueError, match="frozen"):
            step(state, teacher, grads)

    def test_serialized_teacher_hash_stable_across_training(self, tmp_path):
        model = random_model(6)
        teacher = clone_frozen(model)

        def teacher_hash():
            path = tmp_path / "teacher.npz"
            save_checkpoint(path, teacher)
            return hashlib.sha256(path.read_bytes()).hexdigest()

        first = teacher_hash()
        state = init_optimizer(model, "adam", 1e-2)
        g = rng(8)
        for _ in range(20):
            x = g.normal(size=(4, 3))
            grads = backward(model, x, g.normal(size=(4, model.output_dim)))
            step(state, model, grads)
        assert teacher_hash() == first


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = random_model(12, heads=3, k=4)
        path = tmp_path / "model.npz"
        replay = {0: rng(0).normal(size=(6, 3)), 1: rng(1).normal(size=(6, 3))}
        save_checkpoint(path, model, replay=replay)
        loaded, loaded_replay = load_checkpoint(path)
        assert loaded.classes_per_head == model.classes_per_head
        assert loaded.seed_lineage == model.seed_lineage
        for a, b in zip(model.parameters(), loaded.parameters()):
            assert np.array_equal(a, b)
        for c in replay:
            assert np.array_equal(replay[c], loaded_replay[c])

    def test_logits_identical_after_round_trip(self, tmp_path):
        model = random_model(13)
        path = tmp_path / "model.npz"
        save_checkpoint(path, model)
        loaded, _ = load_checkpoint(path)
        x = rng(2).normal(size=(5, 3))
        np.testing.assert_array_equal(forward(model, x)[1], forward(loaded, x)[1])
