import numpy as np
import pytest

from conftest import make_matrix
from xtree import preprocess
from xtree.rng import generator


class TestIqrImpute:
    def test_hand_computed_outlier(self):
        # q1=2, q3=4 (linear interpolation), fences [-1, 7]; 100 -> mean(1..4)
        m = make_matrix([[v] for v in [1.0, 2.0, 3.0, 4.0, 100.0]], [0] * 5, ("c",))
        out, report = preprocess.iqr_impute(m)
        assert out.values[:, 0].tolist() == [1.0, 2.0, 3.0, 4.0, 2.5]
        stats = report.features[0]
        assert stats.q1 == 2.0 and stats.q3 == 4.0
        assert stats.upper_fence == 7.0
        assert stats.replaced_count == 1

    def test_constant_column_untouched(self):
        m = make_matrix([[5.0], [5.0], [5.0]], [0] * 3, ("c",))
        out, report = preprocess.iqr_impute(m)
        assert out.values[:, 0].tolist() == [5.0, 5.0, 5.0]
        assert report.features[0].replaced_count == 0

    def test_in_fence_column_is_noop(self):
        m = make_matrix([[v] for v in [1.0, 2.0, 3.0]], [0] * 3, ("c",))
        out, report = preprocess.iqr_impute(m)
        assert out.values[:, 0].tolist() == [1.0, 2.0, 3.0]
        assert report.features[0].replaced_count == 0

    def test_exempt_column_passes_through(self):
        m = make_matrix([[1.0, 1.0], [2.0, 2.0], [3.0, 999.0]], [0] * 3,
                        ("c",), ("num", "cat"))
        out, _ = preprocess.iqr_impute(m, exempt=("cat",))
        assert out.values[:, 1].tolist() == [1.0, 2.0, 999.0]

    def test_fit_apply_reuses_train_fences(self):
        train = make_matrix([[v] for v in [1.0, 2.0, 3.0, 4.0]], [0] * 4, ("c",))
        params = preprocess.iqr_fit(train)
        test = make_matrix([[v] for v in [2.0, 50.0]], [0] * 2, ("c",))
        out, report = preprocess.iqr_apply(test, params)
        assert out.values[:, 0].tolist() == [2.0, 2.5]  # train in-fence mean
        assert report.features[0].replaced_count == 1


class TestZScore:
    def test_hand_computed(self):
        m = make_matrix([[1.0], [2.0], [3.0]], [0] * 3, ("c",))
        params = preprocess.zscore_fit(m)
        out = preprocess.zscore_apply(m, params)
        expected = 1.0 / np.sqrt(2.0 / 3.0)
        assert out.values[:, 0] == pytest.approx([-expected, 0.0, expected], abs=1e-12)

    def test_constant_column_maps_to_zero(self):
        m = make_matrix([[7.0], [7.0]], [0] * 2, ("c",))
        out = preprocess.zscore_apply(m, preprocess.zscore_fit(m))
        assert out.values[:, 0].tolist() == [0.0, 0.0]

    def test_train_standardized_exactly(self, rng):
        m = make_matrix(rng.normal(3.0, 2.5, size=(200, 4)), [0] * 200, ("c",))
        out = preprocess.zscore_apply(m, preprocess.zscore_fit(m))
        assert np.abs(out.values.mean(axis=0)).max() < 1e-9
        assert np.abs(out.values.std(axis=0) - 1.0).max() < 1e-9

    def test_feature_mismatch_rejected(self):
        m = make_matrix([[1.0], [2.0]], [0, 0], ("c",))
        params = preprocess.zscore_fit(m)
        other = make_matrix([[1.0, 2.0]], [0], ("c",), ("a", "b"))
        with pytest.raises(ValueError):
            preprocess.zscore_apply(other, params)


class TestChiSquareFilter:
    def test_label_copy_is_kept(self, rng):
        labels = rng.integers(0, 3, size=300)
        values = np.column_stack([labels.astype(float), rng.normal(size=300)])
        m = make_matrix(values, labels, ("c0", "c1", "c2"), ("copy", "noise"))
        kept, report = preprocess.chi_square_filter(m)
        assert 0 in kept
        assert report.by_name("copy").chi2_p == pytest.approx(0.0, abs=1e-12)

    def test_independent_table_dropped(self):
        # two-bin feature with counts [[10,10],[10,10]]: p = 1 > alpha
        values = np.array([[0.0]] * 20 + [[1.0]] * 20)
        labels = np.array([0, 1] * 20)
        m = make_matrix(values, labels, ("c0", "c1"), ("f",))
        kept, report = preprocess.chi_square_filter(m, bins=2)
        assert kept == []
        assert report.by_name("f").chi2_p == 1.0

    def test_single_bin_kept_with_warning(self):
        values = np.column_stack([np.full(40, 3.0), np.arange(40, dtype=float)])
        labels = np.array([0, 1] * 20)
        m = make_matrix(values, labels, ("c0", "c1"), ("flat", "ramp"))
        kept, report = preprocess.chi_square_filter(m)
        entry = report.by_name("flat")
        assert entry.kept and entry.chi2_p == 1.0
        assert "single bin" in entry.warning
        assert 0 in kept

    def test_independent_feature_dropped_in_most_trials(self):
        # per-trial false-keep probability is alpha by construction
        dropped = 0
        for trial in range(100):
            rng = generator(99, "chi2-mc", trial)
            labels = rng.integers(0, 3, size=3000)
            values = rng.normal(size=(3000, 1))
            m = make_matrix(values, labels, ("c0", "c1", "c2"), ("noise",))
            kept, _ = preprocess.chi_square_filter(m, alpha=0.05)
            dropped += kept == []
        assert dropped >= 90

    def test_reports_cover_every_feature(self, rng):
        values = rng.normal(size=(120, 5))
        labels = rng.integers(0, 2, size=120)
        m = make_matrix(values, labels)
        kept, report = preprocess.chi_square_filter(m)
        assert [f.name for f in report.features] == list(m.feature_names)
        assert set(kept) <= set(range(5))


class TestPearsonSelect:
    def test_label_copy_ranks_first(self, rng):
        labels = rng.integers(0, 3, size=200)
        values = np.column_stack([rng.normal(size=200), labels.astype(float)])
        m = make_matrix(values, labels, ("c0", "c1", "c2"), ("noise", "copy"))
        kept, report = preprocess.pearson_select(m)
        assert kept[0] == 1
        entry = report.by_name("copy")
        assert entry.r == pytest.approx(1.0)
        assert entry.rank == 1

    def test_negated_copy_same_rank(self, rng):
        labels = rng.integers(0, 3, size=200)
        values = np.column_stack([-labels.astype(float), rng.normal(size=200)])
        m = make_matrix(values, labels, ("c0", "c1", "c2"), ("neg", "noise"))
        kept, report = preprocess.pearson_select(m)
        entry = report.by_name("neg")
        assert entry.r == pytest.approx(-1.0)
        assert entry.rank == 1

    def test_constant_feature_excluded(self, rng):
        labels = rng.integers(0, 2, size=50)
        values = np.column_stack([np.full(50, 2.0), labels.astype(float)])
        m = make_matrix(values, labels, ("c0", "c1"), ("flat", "copy"))
        kept, report = preprocess.pearson_select(m)
        assert 0 not in kept
        assert "constant" in report.by_name("flat").warning

    def test_top_k_truncation_and_tiebreak(self, rng):
        labels = np.array([0, 1] * 50)
        sig = labels.astype(float)
        values = np.column_stack([sig, sig, rng.normal(size=100)])
        m = make_matrix(values, labels, ("c0", "c1"), ("zeta", "alpha", "noise"))
        kept, report = preprocess.pearson_select(m, top_k=1)
        # equal |r|: tie broken by feature name ascending -> alpha wins
        assert len(kept) == 1
        assert m.feature_names[kept[0]] == "alpha"

    def test_adjusted_p_is_bonferroni(self, rng):
        labels = rng.integers(0, 2, size=80)
        values = rng.normal(size=(80, 4))
        m = make_matrix(values, labels, ("c0", "c1"))
        _, report = preprocess.pearson_select(m)
        tested = [f for f in report.features if f.p_raw is not None]
        for entry in tested:
            assert entry.p_adj == pytest.approx(
                min(1.0, entry.p_raw * len(tested)), abs=1e-12
            )


class TestRandomOversample:
    def test_balances_to_majority(self, rng):
        labels = np.array([2] * 60 + [1] * 10 + [0] * 5)
        values = rng.normal(size=(labels.size, 2))
        m = make_matrix(values, labels, ("c0", "c1", "c2"))
        out = preprocess.random_oversample(m, seed=4)
        assert out.class_counts().tolist() == [60, 60, 60]
        assert out.n_rows == 180

    def test_balanced_input_keeps_multiset(self, rng):
        values = rng.normal(size=(20, 2))
        labels = np.array([0, 1] * 10)
        m = make_matrix(values, labels)
        out = preprocess.random_oversample(m, seed=9)
        assert sorted(map(tuple, out.values)) == sorted(map(tuple, values))

    def test_added_rows_duplicate_existing(self, rng):
        labels = np.array([0] * 4 + [1] * 20)
        values = rng.normal(size=(24, 3))
        m = make_matrix(values, labels)
        out = preprocess.random_oversample(m, seed=11)
        originals = {tuple(v) for v in values}
        assert all(tuple(v) in originals for v in out.values)
        # the set of distinct rows per class is unchanged (originals all kept)
        for c in (0, 1):
            before = {tuple(v) for v in values[labels == c]}
            after = {tuple(v) for v in out.values[out.labels == c]}
            assert after == before

    def test_single_class_rejected(self):
        m = make_matrix([[1.0], [2.0]], [0, 0], ("c0", "c1"))
        with pytest.raises(ValueError):
            preprocess.random_oversample(m, seed=0)


class TestGaussianNoise:
    def test_zero_fraction_identity(self, rng):
        m = make_matrix(rng.normal(size=(30, 3)), [0] * 30, ("c",))
        out = preprocess.gaussian_noise(m, fraction=0.0, seed=5)
        assert np.array_equal(out.values, m.values)

    def test_constant_feature_unchanged(self, rng):
        values = np.column_stack([np.full(50, 2.0), rng.normal(size=50)])
        m = make_matrix(values, [0] * 50, ("c",))
        out = preprocess.gaussian_noise(m, fraction=0.15, seed=5)
        assert np.array_equal(out.values[:, 0], values[:, 0])
        assert not np.array_equal(out.values[:, 1], values[:, 1])

    def test_noise_std_calibration(self, rng):
        values = rng.normal(0.0, np.array([1.0, 4.0, 0.25]), size=(10_000, 3))
        m = make_matrix(values, [0] * 10_000, ("c",))
        out = preprocess.gaussian_noise(m, fraction=0.15, seed=17)
        target = 0.15 * values.std(axis=0)
        measured = (out.values - values).std(axis=0)
        assert np.all(np.abs(measured - target) / target < 0.05)

    def test_negative_fraction_rejected(self, rng):
        m = make_matrix(rng.normal(size=(5, 1)), [0] * 5, ("c",))
        with pytest.raises(ValueError):
            preprocess.gaussian_noise(m, fraction=-0.1, seed=0)

    def test_labels_untouched_and_deterministic(self, rng):
        m = make_matrix(rng.normal(size=(40, 2)), [0, 1] * 20)
        a = preprocess.gaussian_noise(m, fraction=0.15, seed=3)
        b = preprocess.gaussian_noise(m, fraction=0.15, seed=3)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.labels, m.labels)
