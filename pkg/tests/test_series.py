"""Series primitives: distance, PAA, recall."""

import math

import numpy as np
import pytest

from climber.errors import ConfigError, InputError
from climber.series import (
    DataSeries,
    Dataset,
    distances_to_many,
    euclidean_distance,
    paa,
    paa_matrix,
    paa_values,
    recall,
)


class TestEuclideanDistance:
    def test_identity(self):
        v = [1.25, -3.5, 0.0, 7.75]
        assert euclidean_distance(v, v) == 0.0

    def test_three_four_five(self):
        assert euclidean_distance([0, 0], [3, 4]) == 5.0

    def test_unit_offsets(self):
        assert euclidean_distance([1, 1, 1], [2, 2, 2]) == pytest.approx(
            math.sqrt(3), abs=0
        )

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            euclidean_distance([1, 2], [1, 2, 3])

    def test_metric_axioms_random(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            a, b, c = rng.normal(size=(3, 6))
            dab = euclidean_distance(a, b)
            assert dab >= 0.0
            assert dab == euclidean_distance(b, a)
            assert euclidean_distance(a, c) <= dab + euclidean_distance(b, c) + 1e-12

    def test_batch_matches_scalar_bitwise(self):
        rng = np.random.default_rng(1)
        rows = rng.normal(size=(40, 12)).astype(np.float32)
        q = rng.normal(size=12)
        batch = distances_to_many(q, rows)
        for i in range(rows.shape[0]):
            assert batch[i] == euclidean_distance(q, rows[i])


class TestPaa:
    def test_constant_series(self):
        assert paa_values([5, 5, 5, 5], 2).tolist() == [5.0, 5.0]

    def test_segment_means(self):
        assert paa_values([1, 2, 3, 4, 5, 6], 3).tolist() == [1.5, 3.5, 5.5]

    def test_width_equals_length_is_identity(self):
        v = [2.0, -1.0, 4.0, 0.5]
        assert paa_values(v, 4).tolist() == v

    def test_remainder_goes_to_leading_segments(self):
        # n=5, w=2: segments of 3 then 2 values
        assert paa_values([1, 2, 3, 4, 5], 2).tolist() == [2.0, 4.5]

    def test_reduces_twelve_to_four(self):
        out = paa_values(np.arange(12.0), 4)
        assert out.shape == (4,)

    def test_bad_width(self):
        with pytest.raises(ConfigError):
            paa_values([1, 2, 3], 0)
        with pytest.raises(ConfigError):
            paa_values([1, 2, 3], 4)

    def test_linearity(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            x, y = rng.normal(size=(2, 13))
            mid = paa_values((x + y) / 2, 4)
            want = (paa_values(x, 4) + paa_values(y, 4)) / 2
            assert np.allclose(mid, want, atol=1e-12)

    def test_wrapper_keeps_source_id(self):
        series = DataSeries(99, np.arange(8.0))
        vec = paa(series, 2)
        assert vec.source_id == 99
        assert len(vec) == 2

    def test_matrix_matches_rowwise(self):
        rng = np.random.default_rng(3)
        mat = rng.normal(size=(20, 11))
        out = paa_matrix(mat, 3)
        for i in range(20):
            assert np.array_equal(out[i], paa_values(mat[i], 3))


class TestRecall:
    def test_equal_sets(self):
        assert recall({1, 2, 3}, {1, 2, 3}) == 1.0

    def test_disjoint(self):
        assert recall({1, 2}, {3, 4}) == 0.0

    def test_half(self):
        approx = set(range(250)) | set(range(1000, 1250))
        exact = set(range(500))
        assert recall(approx, exact) == 0.5

    def test_empty_exact(self):
        with pytest.raises(InputError):
            recall({1}, set())

    def test_monotone_under_correct_additions(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            exact = set(rng.choice(100, size=10, replace=False).tolist())
            approx = set(rng.choice(100, size=10, replace=False).tolist())
            base = recall(approx, exact)
            extra = next(iter(exact - approx), None)
            if extra is not None:
                assert recall(approx | {extra}, exact) >= base


class TestDatasetInvariants:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(InputError):
            Dataset(np.array([1, 1]), np.ones((2, 3)))

    def test_nonfinite_rejected(self):
        with pytest.raises(InputError):
            Dataset(np.array([1, 2]), np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_series_length_mismatch_rejected(self):
        with pytest.raises(InputError):
            Dataset.from_series(
                [DataSeries(1, np.ones(3)), DataSeries(2, np.ones(4))]
            )

    def test_empty_series_rejected(self):
        with pytest.raises(InputError):
            DataSeries(1, np.array([]))
