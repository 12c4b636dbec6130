import numpy as np
import pytest

from conftest import make_matrix
from xtree import shallow_models as sm


class TestKnn:
    def test_exact_training_row_k1(self, rng):
        values = rng.normal(size=(30, 3))
        labels = rng.integers(0, 3, 30)
        m = make_matrix(values, labels)
        model = sm.fit_knn(m, sm.KnnParams(k=1))
        proba = model.predict_proba(values)
        assert np.allclose(proba[np.arange(30), labels], 1.0)
        assert (model.predict(values) == labels).mean() == 1.0

    def test_three_nearest_unanimous(self):
        values = np.array([[0.0, 0.0], [0.0, 0.1], [0.1, 0.0], [1.0, 1.0], [1.0, 0.9]])
        labels = np.array([0, 0, 0, 1, 1])
        m = make_matrix(values, labels)
        model = sm.fit_knn(m, sm.KnnParams(k=3))
        assert model.predict_proba(np.array([[0.0, 0.0]]))[0].tolist() == [1.0, 0.0]

    def test_k_equals_n_gives_global_frequencies(self, rng):
        values = rng.normal(size=(5, 2))
        labels = np.array([0, 0, 0, 1, 1])
        m = make_matrix(values, labels)
        model = sm.fit_knn(m, sm.KnnParams(k=5))
        proba = model.predict_proba(rng.normal(size=(4, 2)))
        assert np.allclose(proba, [0.6, 0.4])

    def test_probability_denominator_is_k(self, rng):
        m = make_matrix(rng.normal(size=(40, 2)), rng.integers(0, 3, 40))
        model = sm.fit_knn(m, sm.KnnParams(k=7))
        proba = model.predict_proba(rng.normal(size=(10, 2)))
        assert np.allclose((proba * 7) - np.round(proba * 7), 0.0)

    def test_distance_ties_break_by_row_index(self):
        # two training rows equidistant from the query: lower index wins
        values = np.array([[1.0], [-1.0], [5.0]])
        labels = np.array([0, 1, 1])
        m = make_matrix(values, labels)
        model = sm.fit_knn(m, sm.KnnParams(k=1))
        assert model.predict(np.array([[0.0]]))[0] == 0

    def test_k_exceeding_n_rejected(self, rng):
        m = make_matrix(rng.normal(size=(3, 1)), [0, 1, 0])
        with pytest.raises(ValueError):
            sm.fit_knn(m, sm.KnnParams(k=4))


def xor_matrix():
    return make_matrix([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], [0, 1, 1, 0])


class TestMlp:
    def test_softmax_rows_sum_to_one(self, rng):
        m = make_matrix(rng.normal(size=(50, 3)), rng.integers(0, 3, 50))
        model = sm.fit_mlp(m, sm.MlpParams(hidden_units=8, max_iterations=5, seed=0))
        proba = model.predict_proba(rng.normal(size=(12, 3)))
        assert np.abs(proba.sum(axis=1) - 1.0).max() < 1e-9

    def test_gradient_matches_finite_differences(self, rng):
        # central differences at step 1e-5 on a 4-row, 3-feature batch
        X = rng.normal(size=(4, 3))
        y = np.array([0, 1, 2, 1])
        gen = np.random.default_rng(7)
        weights = sm.MlpWeights(
            w1=gen.normal(0, 0.5, size=(3, 6)), b1=gen.normal(0, 0.1, size=6),
            w2=gen.normal(0, 0.5, size=(6, 3)), b2=gen.normal(0, 0.1, size=3),
        )
        alpha = 0.01
        _, grads = sm.mlp_loss_and_grad(weights, X, y, alpha)
        step = 1e-5
        worst = 0.0
        for name in ("w1", "b1", "w2", "b2"):
            array = getattr(weights, name)
            grad = getattr(grads, name)
            for idx in np.ndindex(array.shape):
                original = array[idx]
                array[idx] = original + step
                up, _ = sm.mlp_loss_and_grad(weights, X, y, alpha)
                array[idx] = original - step
                down, _ = sm.mlp_loss_and_grad(weights, X, y, alpha)
                array[idx] = original
                numeric = (up - down) / (2 * step)
                scale = max(abs(numeric), abs(grad[idx]), 1e-8)
                worst = max(worst, abs(numeric - grad[idx]) / scale)
        assert worst < 1e-4

    def test_xor_reaches_full_training_accuracy(self):
        m = xor_matrix()
        model = sm.fit_mlp(m, sm.MlpParams(hidden_units=128, max_iterations=1000, seed=0))
        assert (model.predict(m.values) == m.labels).mean() == 1.0

    def test_loss_trace_finite_and_final_below_initial(self, rng):
        m = make_matrix(rng.normal(size=(80, 4)), rng.integers(0, 2, 80))
        model = sm.fit_mlp(m, sm.MlpParams(hidden_units=16, max_iterations=50, seed=1))
        trace = np.asarray(model.loss_trace)
        assert np.all(np.isfinite(trace))
        assert trace[-1] <= trace[0]

    def test_deterministic_for_fixed_seed(self, rng):
        m = make_matrix(rng.normal(size=(40, 3)), rng.integers(0, 2, 40))
        a = sm.fit_mlp(m, sm.MlpParams(hidden_units=8, max_iterations=20, seed=5))
        b = sm.fit_mlp(m, sm.MlpParams(hidden_units=8, max_iterations=20, seed=5))
        assert np.array_equal(a.weights.w1, b.weights.w1)
        assert np.array_equal(a.weights.w2, b.weights.w2)

    def test_predict_is_argmax(self, rng):
        m = make_matrix(rng.normal(size=(30, 2)), rng.integers(0, 3, 30))
        model = sm.fit_mlp(m, sm.MlpParams(hidden_units=4, max_iterations=5, seed=2))
        q = rng.normal(size=(9, 2))
        assert np.array_equal(model.predict(q), np.argmax(model.predict_proba(q), axis=1))
