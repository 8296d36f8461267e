import numpy as np
import pytest

from patchrbm import (ClassRbmParams, ImageDataset, RbmParams, StructureSpec,
                      TrainConfig, build_structure, classify, dense_structure,
                      init_params, measure_gradient_time, momentum_step, train)
from patchrbm.rbm import GradientSet
from patchrbm.training import NonFiniteMetricError, _improved, zero_velocity

from synthetic import oriented_stripes, stripe_images


def stripe_splits(side=3, n=600, seed=100):
    data = stripe_images(n, side, np.random.default_rng(seed))
    cut = int(n * 5 / 6)
    return (ImageDataset(data[:cut], side, side),
            ImageDataset(data[cut:], side, side))


class TestInit:
    def test_glorot_bound_and_zero_biases(self):
        s = dense_structure(784, 121)
        p = init_params(s, seed=0)
        bound = np.sqrt(6.0 / (784 + 121))
        assert np.abs(p.w).max() <= bound
        assert np.abs(p.w).max() > 0.9 * bound  # actually fills the range
        np.testing.assert_array_equal(p.a, 0.0)
        np.testing.assert_array_equal(p.b, 0.0)

    def test_deterministic(self):
        s = dense_structure(20, 10)
        p1, p2 = init_params(s, seed=5), init_params(s, seed=5)
        np.testing.assert_array_equal(p1.w, p2.w)
        assert not np.array_equal(p1.w, init_params(s, seed=6).w)

    def test_off_support_zero(self):
        s = build_structure(StructureSpec(blocks=((1, 2),), grid=(6, 6)))
        p = init_params(s, seed=1)
        dense = p.dense_w()
        assert (dense != 0).sum() == s.nnz
        np.testing.assert_array_equal(dense * (1 - s.mask()), 0.0)

    def test_classifier_init(self):
        s = dense_structure(12, 6)
        p = init_params(s, seed=2, n_classes=4)
        assert isinstance(p, ClassRbmParams)
        ubound = np.sqrt(6.0 / (4 + 6))
        assert np.abs(p.u).max() <= ubound
        np.testing.assert_array_equal(p.c, 0.0)


class TestMomentumStep:
    def _params(self):
        return RbmParams.zeros(dense_structure(3, 2))

    def test_plain_sgd_when_momentum_zero(self):
        p = self._params()
        vel = zero_velocity(p)
        g = GradientSet(w=np.ones(6), a=np.full(3, 2.0), b=np.zeros(2))
        momentum_step(p, vel, g, learning_rate=0.1, momentum=0.0)
        np.testing.assert_allclose(p.w, 0.1)
        np.testing.assert_allclose(p.a, 0.2)

    def test_geometric_accumulation(self):
        # constant gradient g for n steps: velocity = lr*g*(1-beta^n)/(1-beta)
        p = self._params()
        vel = zero_velocity(p)
        g = GradientSet(w=np.ones(6), a=np.zeros(3), b=np.zeros(2))
        lr, beta, n = 0.1, 0.9, 25
        for _ in range(n):
            momentum_step(p, vel, g, lr, beta)
        expected = lr * (1 - beta ** n) / (1 - beta)
        np.testing.assert_allclose(vel["w"], expected, rtol=1e-12)

    def test_velocity_decays_without_gradient(self):
        p = self._params()
        vel = zero_velocity(p)
        g1 = GradientSet(w=np.ones(6), a=np.ones(3), b=np.ones(2))
        momentum_step(p, vel, g1, 0.5, 0.9)
        g0 = GradientSet(w=np.zeros(6), a=np.zeros(3), b=np.zeros(2))
        for _ in range(200):
            momentum_step(p, vel, g0, 0.5, 0.9)
        assert np.abs(vel["w"]).max() < 1e-8
        assert np.abs(p.w - 0.5 / (1 - 0.9) * 1.0).max() < 1e-7  # geometric limit

    def test_shape_mismatch(self):
        p = self._params()
        vel = zero_velocity(p)
        g = GradientSet(w=np.ones(5), a=np.zeros(3), b=np.zeros(2))
        with pytest.raises(ValueError):
            momentum_step(p, vel, g, 0.1, 0.9)


class TestBestSelection:
    def test_crafted_sequence_picks_maximum(self):
        best = None
        best_idx = -1
        for idx, value in enumerate([-100.0, -90.0, -95.0]):
            if _improved(value, best, direction=1):
                best, best_idx = value, idx
        assert (best, best_idx) == (-90.0, 1)

    def test_minimisation_direction(self):
        best = None
        best_idx = -1
        for idx, value in enumerate([0.9, 0.4, 0.6]):
            if _improved(value, best, direction=-1):
                best, best_idx = value, idx
        assert (best, best_idx) == (0.4, 1)


class TestTrain:
    def test_eval_cadence(self):
        tr, va = stripe_splits()
        s = build_structure(StructureSpec(blocks=((1, 1),), grid=(3, 3)))
        cfg = TrainConfig(total_updates=1000, eval_interval=200, seed=0)
        state = train(init_params(s, seed=0), tr, va, cfg)
        assert [u for u, *_ in state.history] == [0, 200, 400, 600, 800, 1000]

    def test_final_update_always_evaluated(self):
        tr, va = stripe_splits()
        s = build_structure(StructureSpec(blocks=((1, 1),), grid=(3, 3)))
        cfg = TrainConfig(total_updates=100, eval_interval=200, seed=0)
        state = train(init_params(s, seed=0), tr, va, cfg)
        assert [u for u, *_ in state.history] == [0, 100]

    def test_generative_improves_exact_ll(self):
        tr, va = stripe_splits()
        s = build_structure(StructureSpec(blocks=((1, 1),), grid=(3, 3)))
        cfg = TrainConfig(total_updates=1500, eval_interval=300, seed=0)
        state = train(init_params(s, seed=0), tr, va, cfg)
        assert state.best_metric > state.history[0][2]
        assert state.best_metric == max(v for _, _, v, _ in state.history)

    def test_reproducible_histories(self):
        tr, va = stripe_splits()
        s = build_structure(StructureSpec(blocks=((1, 1),), grid=(3, 3)))
        cfg = TrainConfig(total_updates=400, eval_interval=100, seed=3)
        h1 = train(init_params(s, seed=3), tr, va, cfg).history
        h2 = train(init_params(s, seed=3), tr, va, cfg).history
        assert [(u, n, v) for u, n, v, _ in h1] == [(u, n, v) for u, n, v, _ in h2]

    def test_zero_learning_rate_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)

    def test_support_invariant_after_training(self):
        tr, va = stripe_splits()
        s = build_structure(StructureSpec(blocks=((1, 1),), grid=(3, 3)))
        state = train(init_params(s, seed=0), tr, va,
                      TrainConfig(total_updates=200, eval_interval=100, seed=0))
        off = state.params.dense_w() * (1 - s.mask())
        np.testing.assert_array_equal(off, 0.0)
        assert state.velocity["w"].shape == (s.nnz,)
        assert np.all(np.isfinite(state.params.w))

    def test_discriminative_needs_labels(self):
        tr, va = stripe_splits()
        s = build_structure(StructureSpec(blocks=((1, 1),), grid=(3, 3)))
        p = init_params(s, seed=0, n_classes=2)
        cfg = TrainConfig(objective="discriminative", total_updates=10,
                          eval_interval=5, seed=0)
        with pytest.raises(ValueError):
            train(p, tr, va, cfg)

    def test_discriminative_learns(self):
        g = np.random.default_rng(200)
        xi, yi = oriented_stripes(700, 8, g)
        tr = ImageDataset(xi[:600], 8, 8, labels=yi[:600])
        va = ImageDataset(xi[600:], 8, 8, labels=yi[600:])
        s = build_structure(StructureSpec(blocks=((2, 2),), grid=(8, 8)))
        p = init_params(s, seed=0, n_classes=2)
        cfg = TrainConfig(objective="discriminative", validation_metric="logloss",
                          total_updates=1500, eval_interval=250, seed=0)
        state = train(p, tr, va, cfg)
        assert state.best_metric < state.history[0][2]
        preds = classify(va.images, state.best_params)
        assert (preds == va.labels).mean() > 0.9

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_metric_aborts(self):
        tr, va = stripe_splits()
        s = build_structure(StructureSpec(blocks=((1, 1),), grid=(3, 3)))
        p = init_params(s, seed=0)
        p.a += 1e308  # free energies overflow to -inf likelihoods
        cfg = TrainConfig(total_updates=10, eval_interval=5, seed=0)
        with pytest.raises(NonFiniteMetricError):
            train(p, tr, va, cfg)


class TestGradientTiming:
    def test_single_repetition_has_zero_std(self):
        p = init_params(dense_structure(16, 8), seed=0)
        batch = np.random.default_rng(0).random((4, 16))
        stats = measure_gradient_time(p, batch, repetitions=1)
        assert stats["sparse"]["std"] == 0.0
        assert stats["dense"]["std"] == 0.0

    def test_sparse_beats_dense_on_patch_model(self):
        s = build_structure(StructureSpec(blocks=((4, 1),), grid=(28, 28)))
        p = init_params(s, seed=0)
        batch = np.random.default_rng(1).random((16, 784))
        stats = measure_gradient_time(p, batch, repetitions=20)
        assert stats["sparse"]["mean"] < stats["dense"]["mean"]

    def test_dense_structure_paths_same_order_of_magnitude(self):
        # identical arithmetic work; implementations differ by a constant
        p = init_params(dense_structure(64, 32), seed=0)
        batch = np.random.default_rng(2).random((16, 64))
        stats = measure_gradient_time(p, batch, repetitions=50)
        ratio = stats["dense"]["mean"] / stats["sparse"]["mean"]
        assert 0.1 < ratio < 10.0

    def test_discriminative_timing(self):
        s = dense_structure(16, 8)
        p = init_params(s, seed=0, n_classes=3)
        batch = np.random.default_rng(3).random((4, 16))
        labels = np.random.default_rng(4).integers(0, 3, 4)
        stats = measure_gradient_time(p, batch, repetitions=2, labels=labels)
        assert stats["sparse"]["mean"] > 0
