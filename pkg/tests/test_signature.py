"""Dual signatures, overlap distance, and the decay-weight calculus."""

import numpy as np
import pytest

from climber.errors import BuildError, ConfigError, InputError
from climber.signature import (
    DecaySpec,
    DualSignature,
    PivotSet,
    dual_signature,
    overlap_distance,
    pivot_weights,
    select_pivots,
    signature_choice,
    total_weight,
    weight_distance,
)

EXP_HALF = DecaySpec("exponential", 0.5)


class TestSelectPivots:
    def test_sample_of_exactly_r(self):
        sample = np.arange(12.0).reshape(4, 3)
        pivots = select_pivots(sample, 4, seed=0)
        assert sorted(map(tuple, pivots.vectors.tolist())) == sorted(
            map(tuple, sample.tolist())
        )

    def test_deterministic(self):
        sample = np.random.default_rng(0).normal(size=(30, 4))
        assert select_pivots(sample, 10, seed=5) == select_pivots(sample, 10, seed=5)

    def test_sample_too_small(self):
        with pytest.raises(BuildError):
            select_pivots(np.ones((3, 2)), 4, seed=0)

    def test_two_hundred_distinct(self):
        rng = np.random.default_rng(9)
        walks = np.cumsum(rng.standard_normal((500, 16)), axis=1)
        pivots = select_pivots(walks, 200, seed=9)
        assert pivots.count == 200
        assert list(pivots.ids) == list(range(1, 201))
        assert len({tuple(v) for v in pivots.vectors.tolist()}) == 200


class TestDualSignature:
    def test_exact_pivot_leads(self):
        vectors = np.array([[0.0, 0.0], [5.0, 0.0], [9.0, 9.0]])
        pivots = PivotSet(vectors, seed=0)
        sig = dual_signature(np.array([5.0, 0.0]), pivots, 2)
        assert sig.rank_sensitive[0] == 2

    def test_one_dimensional_ordering(self):
        pivots = PivotSet(np.array([[0.0], [10.0], [20.0]]), seed=0)
        sig = dual_signature(np.array([2.0]), pivots, 2)
        assert sig.rank_sensitive == (1, 2)
        assert sig.rank_insensitive == (1, 2)

    def test_rank_views_disagree_on_order_only(self):
        # Two objects on either side of the p1/p4 boundary share the same
        # id set but opposite leading pivots.
        vectors = np.array(
            [[0.0, 0.0], [4.0, 0.0], [10.0, 10.0], [1.0, 0.0]]
        )
        pivots = PivotSet(vectors, seed=0)
        sig_x = dual_signature(np.array([0.4, 0.0]), pivots, 3)
        sig_y = dual_signature(np.array([0.9, 0.0]), pivots, 3)
        assert sig_x.rank_sensitive == (1, 4, 2)
        assert sig_y.rank_sensitive == (4, 1, 2)
        assert sig_x.rank_insensitive == sig_y.rank_insensitive == (1, 2, 4)

    def test_equidistant_pivots_resolve_to_smaller_id(self):
        dup = np.array([[1.0, 1.0], [1.0, 1.0], [3.0, 3.0]])
        pivots = PivotSet(dup, seed=0)
        sig = dual_signature(np.array([0.0, 0.0]), pivots, 2)
        assert sig.rank_sensitive == (1, 2)

    def test_prefix_longer_than_pivot_count(self):
        pivots = PivotSet(np.ones((2, 2)), seed=0)
        with pytest.raises(ConfigError):
            dual_signature(np.ones(2), pivots, 3)

    def test_invariant_sorted_view(self):
        with pytest.raises(InputError):
            DualSignature((3, 1, 2), (1, 2, 4))
        with pytest.raises(InputError):
            DualSignature((3, 3, 1), (1, 3, 3))


class TestOverlapDistance:
    def test_worked_example(self):
        assert overlap_distance((1, 3, 6, 8), (2, 3, 4, 6)) == 2

    def test_identical(self):
        assert overlap_distance((2, 5, 9), (2, 5, 9)) == 0

    def test_disjoint_m10(self):
        a = tuple(range(1, 11))
        b = tuple(range(11, 21))
        assert overlap_distance(a, b) == 10

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            overlap_distance((1, 2), (1, 2, 3))

    def test_symmetry_and_bounds_random(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            a = tuple(sorted(rng.choice(30, size=5, replace=False).tolist()))
            b = tuple(sorted(rng.choice(30, size=5, replace=False).tolist()))
            od = overlap_distance(a, b)
            assert 0 <= od <= 5
            assert od == overlap_distance(b, a)
            assert (od == 0) == (a == b)


class TestWeights:
    def test_exponential_half(self):
        assert pivot_weights((4, 2, 1), EXP_HALF).tolist() == [1.0, 0.5, 0.25]

    def test_linear_quarters(self):
        assert pivot_weights((9, 8, 7, 6), DecaySpec("linear", None)).tolist() == [
            1.0,
            0.75,
            0.5,
            0.25,
        ]

    def test_single_position(self):
        assert pivot_weights((3,), EXP_HALF).tolist() == [1.0]

    def test_strictly_decreasing(self):
        for lam in (0.1, 0.3, 0.5, 0.9):
            w = DecaySpec("exponential", lam).weights(8)
            assert all(w[i] > w[i + 1] for i in range(7))
        w = DecaySpec("linear", None).weights(8)
        assert all(w[i] > w[i + 1] for i in range(7))

    def test_bad_rate(self):
        with pytest.raises(ConfigError):
            DecaySpec("exponential", 0.0)
        with pytest.raises(ConfigError):
            DecaySpec("exponential", 1.0)
        with pytest.raises(ConfigError):
            DecaySpec("linear", 0.5)

    def test_total_weight_values(self):
        assert total_weight(3, EXP_HALF) == 1.75
        assert total_weight(1, EXP_HALF) == 1.0
        assert total_weight(4, DecaySpec("linear", None)) == 2.5

    def test_total_weight_constant_across_signatures(self):
        rng = np.random.default_rng(2)
        expected = total_weight(6, EXP_HALF)
        for _ in range(20):
            rs = tuple(rng.permutation(40)[:6] + 1)
            assert float(np.sum(pivot_weights(rs, EXP_HALF))) == expected


class TestWeightDistance:
    def test_worked_values(self):
        sig_y = DualSignature.from_rank_sensitive((4, 2, 1))
        assert weight_distance(sig_y, (1, 2, 3), EXP_HALF) == 1.0
        assert weight_distance(sig_y, (2, 4, 5), EXP_HALF) == 0.25

    def test_full_overlap_is_zero(self):
        sig = DualSignature.from_rank_sensitive((7, 3, 5))
        assert weight_distance(sig, (3, 5, 7), EXP_HALF) == 0.0

    def test_zero_overlap_is_total_weight(self):
        sig = DualSignature.from_rank_sensitive((7, 3, 5))
        assert weight_distance(sig, (1, 2, 4), EXP_HALF) == total_weight(3, EXP_HALF)

    def test_length_mismatch(self):
        sig = DualSignature.from_rank_sensitive((7, 3, 5))
        with pytest.raises(InputError):
            weight_distance(sig, (1, 2), EXP_HALF)

    def test_bounds_random(self):
        rng = np.random.default_rng(4)
        tw = total_weight(5, EXP_HALF)
        for _ in range(200):
            rs = tuple(rng.permutation(20)[:5] + 1)
            cent = tuple(sorted(rng.permutation(20)[:5] + 1))
            wd = weight_distance(DualSignature.from_rank_sensitive(rs), cent, EXP_HALF)
            assert 0.0 <= wd <= tw


class TestSignatureChoice:
    def test_deterministic_and_bounded(self):
        for n in (1, 2, 5):
            picks = {signature_choice(7, (3, 1, 4), n) for _ in range(10)}
            assert len(picks) == 1
            assert 0 <= picks.pop() < n

    def test_varies_with_signature(self):
        rng = np.random.default_rng(0)
        picks = set()
        for _ in range(64):
            rs = tuple(rng.permutation(50)[:4] + 1)
            picks.add(signature_choice(7, rs, 2))
        assert picks == {0, 1}
