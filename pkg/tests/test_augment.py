import numpy as np
import pytest

from ddlab import (ClassificationDataset, ConcatView, MemoryBudgetError,
                   RegressionDataset, Rng, build_concat_test,
                   build_concat_train_view, concat_pair,
                   gen_mixture_classification, materialize, one_hot,
                   sample_pairs)
from ddlab.datagen import MODE_MULTI_HOT


def tiny_regression():
    return RegressionDataset(np.array([[1.0], [2.0]]), np.array([10.0, 20.0]))


def small_classification(n=6, c=4, seed=0):
    return gen_mixture_classification(n, 3, c, 2.0, Rng(seed))


class TestConcatPair:
    def test_two_hot_from_distinct_one_hots(self):
        e3, e7 = one_hot([3], 10)[0], one_hot([7], 10)[0]
        _, target = concat_pair(np.zeros(2), e3, np.ones(2), e7)
        expected = np.zeros(10)
        expected[3] = expected[7] = 0.5
        np.testing.assert_array_equal(target, expected)

    def test_self_pair_keeps_target(self):
        e2 = one_hot([2], 5)[0]
        x = np.array([1.0, 2.0])
        features, target = concat_pair(x, e2, x, e2)
        np.testing.assert_array_equal(features, [1.0, 2.0, 1.0, 2.0])
        np.testing.assert_array_equal(target, e2)

    def test_regression_mean(self):
        _, target = concat_pair(np.zeros(1), 0.2, np.zeros(1), 0.6)
        assert target == pytest.approx(0.4)

    def test_multi_hot_max(self):
        e1, e3 = one_hot([1], 4)[0], one_hot([3], 4)[0]
        _, target = concat_pair(np.zeros(1), e1, np.zeros(1), e3,
                                mode=MODE_MULTI_HOT)
        np.testing.assert_array_equal(target, [0.0, 1.0, 0.0, 1.0])
        # same class stays a valid binary vector
        _, target = concat_pair(np.zeros(1), e1, np.zeros(1), e1,
                                mode=MODE_MULTI_HOT)
        np.testing.assert_array_equal(target, e1)

    def test_mixed_modes_rejected(self):
        with pytest.raises(ValueError):
            concat_pair(np.zeros(1), np.array([0.5, 0.5]), np.zeros(1),
                        np.array([1.0, 0.0]), mode=MODE_MULTI_HOT)
        with pytest.raises(ValueError):
            concat_pair(np.zeros(2), 1.0, np.zeros(3), 2.0)


class TestConcatView:
    def test_n2_enumerates_the_four_displayed_pairs(self):
        view = build_concat_train_view(tiny_regression())
        assert view.pair_count == 4
        got = [view.element(i, j) for i in range(2) for j in range(2)]
        expected = [([1.0, 1.0], 10.0), ([1.0, 2.0], 15.0),
                    ([2.0, 1.0], 15.0), ([2.0, 2.0], 20.0)]
        for (f, t), (ef, et) in zip(got, expected):
            np.testing.assert_array_equal(f, ef)
            assert t == et

    def test_single_row_base(self):
        base = RegressionDataset(np.array([[3.0]]), np.array([7.0]))
        view = ConcatView(base)
        assert view.pair_count == 1
        features, target = view.element(0, 0)
        np.testing.assert_array_equal(features, [3.0, 3.0])
        assert target == 7.0

    def test_huge_base_stays_virtual(self):
        features = np.zeros((50_000, 2))
        targets = one_hot(np.arange(50_000) % 2, 2)
        view = ConcatView(ClassificationDataset(features, targets))
        assert view.pair_count == 2_500_000_000
        assert view.input_dim == 4

    def test_symmetry(self):
        view = ConcatView(small_classification())
        for i, j in [(0, 3), (2, 5), (1, 4)]:
            fij, tij = view.element(i, j)
            fji, tji = view.element(j, i)
            d = view.base.dim
            np.testing.assert_array_equal(fij[:d], fji[d:])
            np.testing.assert_array_equal(fij[d:], fji[:d])
            np.testing.assert_array_equal(tij, tji)

    def test_diagonal_matches_self_concat_test(self):
        base = small_classification()
        view = ConcatView(base)
        test = build_concat_test(base)
        for i in range(base.n):
            features, target = view.element(i, i)
            np.testing.assert_array_equal(features, test.features[i])
            np.testing.assert_array_equal(target, test.targets[i])

    def test_out_of_range(self):
        view = ConcatView(tiny_regression())
        with pytest.raises(IndexError):
            view.element(0, 2)


class TestConcatTest:
    def test_shape_and_targets(self):
        base = small_classification(n=5)
        test = build_concat_test(base)
        assert test.features.shape == (5, 2 * base.dim)
        np.testing.assert_array_equal(test.targets, base.targets)
        np.testing.assert_array_equal(test.features[:, :base.dim],
                                      base.features)

    def test_double_application(self):
        base = small_classification(n=4)
        twice = build_concat_test(build_concat_test(base))
        assert twice.features.shape == (4, 4 * base.dim)
        np.testing.assert_array_equal(twice.targets, base.targets)


class TestSamplePairs:
    def test_exhaustive(self):
        view = ConcatView(tiny_regression())
        batch = sample_pairs(view, 4, Rng(0))
        assert {tuple(p) for p in batch.indices.tolist()} == \
            {(0, 0), (0, 1), (1, 0), (1, 1)}

    def test_without_replacement(self):
        view = ConcatView(tiny_regression())
        batch = sample_pairs(view, 3, Rng(5))
        assert len({tuple(p) for p in batch.indices.tolist()}) == 3

    def test_deterministic(self):
        view = ConcatView(small_classification(n=10))
        a = sample_pairs(view, 25, Rng(3))
        b = sample_pairs(view, 25, Rng(3))
        np.testing.assert_array_equal(a.indices, b.indices)
        np.testing.assert_array_equal(a.features, b.features)

    def test_batch_features_match_elements(self):
        view = ConcatView(small_classification(n=7))
        batch = sample_pairs(view, 12, Rng(1))
        for row, (i, j) in enumerate(batch.indices.tolist()):
            features, target = view.element(i, j)
            np.testing.assert_array_equal(batch.features[row], features)
            np.testing.assert_array_equal(batch.targets[row], target)

    def test_oversized_request(self):
        view = ConcatView(tiny_regression())
        with pytest.raises(ValueError):
            sample_pairs(view, 5, Rng(0))


class TestMaterialize:
    def test_tiny_example_rows(self):
        ds = materialize(ConcatView(tiny_regression()))
        np.testing.assert_array_equal(
            ds.features, [[1, 1], [1, 2], [2, 1], [2, 2]])
        np.testing.assert_array_equal(ds.targets, [10, 15, 15, 20])

    def test_shape(self):
        base = RegressionDataset(Rng(0).standard_normal((30, 30)),
                                 np.zeros(30))
        ds = materialize(ConcatView(base))
        assert ds.features.shape == (900, 60)

    def test_column_half_multisets_match(self):
        base = RegressionDataset(Rng(2).standard_normal((5, 3)), np.zeros(5))
        ds = materialize(ConcatView(base))
        left = np.sort(ds.features[:, :3], axis=0)
        right = np.sort(ds.features[:, 3:], axis=0)
        np.testing.assert_array_equal(left, right)

    def test_budget_error_names_the_budget(self):
        base = RegressionDataset(np.zeros((100, 10)), np.zeros(100))
        with pytest.raises(MemoryBudgetError, match="1000-byte"):
            materialize(ConcatView(base), max_bytes=1000)

    def test_matches_enumeration_order(self):
        base = small_classification(n=4)
        view = ConcatView(base)
        ds = materialize(view)
        row = 0
        for i in range(4):
            for j in range(4):
                features, target = view.element(i, j)
                np.testing.assert_array_equal(ds.features[row], features)
                np.testing.assert_array_equal(ds.targets[row], target)
                row += 1

    def test_target_conservation(self):
        # mean of pair targets equals mean of base targets by linearity
        base = small_classification(n=8)
        ds = materialize(ConcatView(base))
        np.testing.assert_allclose(ds.targets.mean(axis=0),
                                   base.targets.mean(axis=0), atol=1e-12)
