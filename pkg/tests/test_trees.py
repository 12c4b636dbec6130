import numpy as np
import pytest

import oracles
from conftest import make_matrix
from xtree import trees
from xtree.trees import ForestParams, GbdtParams, TreeParams


def xor_matrix():
    return make_matrix(
        [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], [0, 1, 1, 0]
    )


def check_node_invariants(model):
    depths = model.node_depths()
    cap = model.params.max_depth
    for node in range(model.n_nodes):
        counts = model.class_counts[node]
        assert counts.sum() == model.n_samples[node]
        if model.is_leaf(node):
            assert abs(model.value[node].sum() - 1.0) < 1e-12
            continue
        left, right = int(model.left[node]), int(model.right[node])
        assert model.n_samples[node] == model.n_samples[left] + model.n_samples[right]
        if cap is not None:
            assert depths[node] < cap
        assert model.n_samples[node] >= model.params.min_samples_split
        parent_gini = trees.gini_impurity(counts)
        child = (
            model.n_samples[left] * trees.gini_impurity(model.class_counts[left])
            + model.n_samples[right] * trees.gini_impurity(model.class_counts[right])
        ) / model.n_samples[node]
        assert child <= parent_gini + 1e-12
        assert 0.0 <= parent_gini <= 1.0 - 1.0 / len(model.class_names)


class TestFitCart:
    def test_pure_input_single_leaf(self):
        m = make_matrix([[1.0], [2.0], [3.0]], [1, 1, 1], ("c0", "c1"))
        model = trees.fit_cart(m, TreeParams())
        assert model.n_nodes == 1
        assert model.value[0].tolist() == [0.0, 1.0]

    def test_one_dimensional_split(self):
        m = make_matrix([[0.0], [1.0]], [0, 1])
        model = trees.fit_cart(m, TreeParams(min_samples_split=2))
        assert model.depth() == 1
        assert model.threshold[0] == 0.5
        assert model.predict_proba(np.array([[0.4]]))[0].tolist() == [1.0, 0.0]

    def test_xor_learned_at_depth_two(self):
        model = trees.fit_cart(xor_matrix(), TreeParams(max_depth=2, min_samples_split=2))
        m = xor_matrix()
        assert (model.predict(m.values) == m.labels).mean() == 1.0
        # documented tie-break: equal-gini root splits pick the lowest feature
        assert model.feature_index[0] == 0
        assert model.threshold[0] == 0.5

    def test_empty_matrix_rejected(self):
        m = make_matrix(np.empty((0, 2)), np.empty(0, dtype=int), ("c0",))
        with pytest.raises(ValueError):
            trees.fit_cart(m, TreeParams())

    def test_node_invariants_on_random_data(self, rng):
        m = make_matrix(rng.normal(size=(300, 4)), rng.integers(0, 3, 300))
        model = trees.fit_cart(m, TreeParams(max_depth=6, min_samples_split=5))
        check_node_invariants(model)
        assert model.depth() <= 6

    def test_overfit_consistency(self, rng):
        values = rng.normal(size=(120, 3))
        labels = rng.integers(0, 3, 120)
        m = make_matrix(values, labels)
        model = trees.fit_cart(m, TreeParams(max_depth=None, min_samples_split=2))
        assert (model.predict(values) == labels).mean() == 1.0

    def test_training_row_probability_one_when_overfit(self, rng):
        values = rng.normal(size=(50, 2))
        labels = rng.integers(0, 2, 50)
        m = make_matrix(values, labels)
        model = trees.fit_cart(m, TreeParams(max_depth=None, min_samples_split=2))
        proba = model.predict_proba(values)
        assert np.allclose(proba[np.arange(50), labels], 1.0)

    def test_laplace_smoothing_option(self):
        m = make_matrix([[1.0], [2.0], [3.0]], [1, 1, 1], ("c0", "c1"))
        model = trees.fit_cart(m, TreeParams(laplace_smoothing=True))
        # counts (0, 3) smoothed to (1, 4) over n + C
        assert model.value[0] == pytest.approx([1 / 5, 4 / 5], abs=1e-12)


class TestPredict:
    def test_probabilities_sum_to_one(self, rng):
        m = make_matrix(rng.normal(size=(200, 3)), rng.integers(0, 3, 200))
        model = trees.fit_cart(m, TreeParams(max_depth=4))
        proba = model.predict_proba(rng.normal(size=(40, 3)))
        assert np.abs(proba.sum(axis=1) - 1.0).max() < 1e-12

    def test_predict_is_argmax_with_low_index_ties(self, rng):
        m = make_matrix(rng.normal(size=(100, 2)), rng.integers(0, 3, 100))
        model = trees.fit_cart(m, TreeParams(max_depth=3))
        q = rng.normal(size=(30, 2))
        assert np.array_equal(model.predict(q), np.argmax(model.predict_proba(q), axis=1))

    def test_column_mismatch_rejected(self, rng):
        m = make_matrix(rng.normal(size=(20, 3)), rng.integers(0, 2, 20))
        model = trees.fit_cart(m, TreeParams())
        with pytest.raises(ValueError, match="3 feature columns"):
            model.predict(rng.normal(size=(5, 2)))


class TestRandomForest:
    def test_degenerate_forest_equals_cart(self, rng):
        m = make_matrix(rng.normal(size=(150, 4)), rng.integers(0, 3, 150))
        params = ForestParams(n_trees=1, tree=TreeParams(max_depth=5),
                              features_per_split=4, bootstrap=False, seed=0)
        forest = trees.fit_random_forest(m, params)
        single = trees.fit_cart(m, TreeParams(max_depth=5))
        q = rng.normal(size=(50, 4))
        assert np.array_equal(forest.predict(q), single.predict(q))
        assert np.allclose(forest.predict_proba(q), single.predict_proba(q))

    def test_probabilities_sum_to_one(self, rng):
        m = make_matrix(rng.normal(size=(120, 3)), rng.integers(0, 2, 120))
        forest = trees.fit_random_forest(m, ForestParams(n_trees=7, seed=2))
        proba = forest.predict_proba(rng.normal(size=(20, 3)))
        assert np.abs(proba.sum(axis=1) - 1.0).max() < 1e-12

    def test_same_seed_identical_forest(self, rng):
        m = make_matrix(rng.normal(size=(80, 3)), rng.integers(0, 2, 80))
        a = trees.fit_random_forest(m, ForestParams(n_trees=4, seed=9))
        b = trees.fit_random_forest(m, ForestParams(n_trees=4, seed=9))
        assert a.to_payload() == b.to_payload()


class TestGbdt:
    def test_single_class_convergence_matches_recurrence(self):
        # oracle: gbdt_single_class_recurrence(400, 10, 0.1, 50) = 0.99343...
        n = 400
        m = make_matrix(np.ones((n, 2)), np.zeros(n, dtype=int), ("c0", "c1", "c2"))
        params = GbdtParams(n_iterations=50, learning_rate=0.1, depth=6,
                            l2_leaf_reg=10.0)
        model = trees.fit_gbdt(m, params)
        p0 = model.predict_proba(m.values[:1])[0, 0]
        expected = oracles.gbdt_single_class_recurrence(n, 10.0, 0.1, 50)
        assert p0 == pytest.approx(expected, abs=1e-9)
        assert p0 >= 0.99

    def test_softmax_rows_sum_to_one(self, rng):
        m = make_matrix(rng.normal(size=(60, 3)), rng.integers(0, 3, 60))
        model = trees.fit_gbdt(m, GbdtParams(n_iterations=5, depth=3))
        proba = model.predict_proba(rng.normal(size=(10, 3)))
        assert np.abs(proba.sum(axis=1) - 1.0).max() < 1e-12

    def test_training_loss_strictly_decreases(self, rng):
        # separable two-class set: loss must fall every one of the first 10 rounds
        n = 80
        labels = np.array([0] * (n // 2) + [1] * (n // 2))
        values = rng.normal(size=(n, 2))
        values[:, 0] = np.where(labels == 1, 1.0, -1.0) + rng.normal(0, 0.1, n)
        m = make_matrix(values, labels)
        model = trees.fit_gbdt(m, GbdtParams(n_iterations=10, depth=3, l2_leaf_reg=1.0))
        trace = model.loss_trace
        assert len(trace) == 10
        assert all(a > b for a, b in zip(trace, trace[1:]))

    def test_learns_separable_data(self, rng):
        labels = rng.integers(0, 2, 100)
        values = rng.normal(size=(100, 2))
        values[:, 1] = labels * 2.0 - 1.0
        m = make_matrix(values, labels)
        model = trees.fit_gbdt(m, GbdtParams(n_iterations=30, depth=2, l2_leaf_reg=1.0))
        assert (model.predict(values) == labels).mean() == 1.0


class TestGridSearch:
    def test_single_candidate(self, rng):
        m = make_matrix(rng.normal(size=(60, 2)), rng.integers(0, 2, 60))
        only = TreeParams(max_depth=3)
        best, table = trees.grid_search_tree(m, [only], k=3, seed=0)
        assert best == only
        assert len(table) == 1

    def test_best_mean_is_argmax(self, rng):
        values = rng.normal(size=(90, 2))
        labels = (values[:, 0] > 0).astype(int)
        m = make_matrix(values, labels)
        grid = [TreeParams(max_depth=1), TreeParams(max_depth=4)]
        best, table = trees.grid_search_tree(m, grid, k=3, seed=1)
        best_mean = max(t["mean_accuracy"] for t in table)
        chosen = next(t for t in table if t["params"] == best)
        assert chosen["mean_accuracy"] == best_mean

    def test_tie_prefers_shallower_then_larger_split(self, rng):
        # trivially separable by one split: every depth ties at accuracy 1
        values = rng.normal(size=(60, 1))
        labels = (values[:, 0] > 0).astype(int)
        m = make_matrix(values, labels)
        grid = [TreeParams(max_depth=10, min_samples_split=2),
                TreeParams(max_depth=3, min_samples_split=2),
                TreeParams(max_depth=3, min_samples_split=4)]
        best, _ = trees.grid_search_tree(m, grid, k=3, seed=2)
        assert best.max_depth == 3
        assert best.min_samples_split == 4

    def test_empty_grid_rejected(self, rng):
        m = make_matrix(rng.normal(size=(20, 1)), rng.integers(0, 2, 20))
        with pytest.raises(ValueError):
            trees.grid_search_tree(m, [], k=2, seed=0)


class TestExportTree:
    def test_single_leaf(self):
        m = make_matrix([[1.0]], [0], ("c0",))
        model = trees.fit_cart(m, TreeParams())
        rendering = trees.export_tree(model)
        assert "leaf" in rendering.text
        assert "->" not in rendering.dot

    def test_truncation_at_max_depth(self, rng):
        values = rng.normal(size=(400, 3))
        labels = rng.integers(0, 2, 400)
        m = make_matrix(values, labels)
        model = trees.fit_cart(m, TreeParams(max_depth=8, min_samples_split=2))
        assert model.depth() > 4
        rendering = trees.export_tree(model, max_depth=4)
        assert "(…)" in rendering.text
        # indentation tracks depth: 4 spaces per level, none deeper than cut+1
        for line in rendering.text.splitlines():
            indent = (len(line) - len(line.lstrip())) // 4
            assert indent <= 5

    def test_rendered_counts_are_consistent(self, rng):
        m = make_matrix(rng.normal(size=(100, 2)), rng.integers(0, 2, 100))
        model = trees.fit_cart(m, TreeParams(max_depth=3))
        check_node_invariants(model)
        rendering = trees.export_tree(model, max_depth=3)
        assert f"n={model.n_samples[0]}" in rendering.text.splitlines()[0]
