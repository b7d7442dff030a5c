import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torus_bnf.lattice import (
    IndexTuple,
    LatticeIndex,
    ModeBox,
    check_rearrangement_bound,
    convolution_sum,
    decode,
    decreasing_rearrangement,
    encode,
    is_action_resonant,
    is_super_action_resonant,
    make_index,
    momentum,
    orbit_size,
    weight,
    weight_sum,
)


def T(*entries):
    return IndexTuple(entries)


def index_strategy(dim):
    return st.builds(lambda d, a: make_index(d, a), st.sampled_from([1, -1]),
                     st.lists(st.integers(-6, 6), min_size=dim, max_size=dim))


tuples = st.integers(1, 3).flatmap(lambda d: st.lists(index_strategy(d), min_size=1, max_size=6))


class TestWeight:
    def test_examples(self):
        assert weight((1, 0)) == 1.0
        assert weight((-1, (3, 4))) == 6.0
        assert weight((1, 2)) == 3.0

    @given(index_strategy(2))
    def test_conjugate_invariant(self, j):
        assert weight(j) >= 1.0
        assert weight(j) == weight(j.conjugate())
        assert j.conjugate().conjugate() == j


class TestEncoding:
    @given(index_strategy(3))
    def test_round_trip(self, j):
        assert decode(encode(j), 3) == j

    @given(index_strategy(2), index_strategy(2))
    def test_code_order_is_canonical_order(self, i, j):
        assert (encode(i) < encode(j)) == (i.sort_key() < j.sort_key())

    def test_rejects_bad_sign(self):
        with pytest.raises(ValueError):
            make_index(0, 1)


class TestMomentum:
    def test_examples(self):
        assert momentum(T((1, 2), (-1, 3), (1, 0))) == (-1,)
        assert momentum(T((1, 7), (-1, 7))) == (0,)
        assert momentum(T((1, (1, 0)), (1, (0, 1)))) == (1, 1)

    @given(tuples, st.randoms(use_true_random=False))
    def test_permutation_invariant(self, entries, rnd):
        shuffled = list(entries)
        rnd.shuffle(shuffled)
        assert momentum(IndexTuple(entries)) == momentum(IndexTuple(shuffled))
        assert IndexTuple(entries).canonical_key == IndexTuple(shuffled).canonical_key
        assert decreasing_rearrangement(entries) == decreasing_rearrangement(shuffled)


class TestRearrangement:
    def test_examples(self):
        assert decreasing_rearrangement(T((1, 1), (-1, 1), (1, 0))) == [2, 2, 1]
        assert decreasing_rearrangement(T((1, 0))) == [1]
        assert decreasing_rearrangement(T((1, 2), (-1, 1), (-1, 1))) == [3, 2, 2]

    def test_bound_examples(self):
        assert check_rearrangement_bound(T((1, 5), (-1, 5)))
        t = T((1, 10), (-1, 1), (-1, 1))
        assert check_rearrangement_bound(t)
        assert 11 <= 9 * 2 * 2 ** (2 / 3)

    def test_bound_random_sampling(self):
        rng = np.random.default_rng(3)
        for _ in range(10_000):
            d = int(rng.integers(1, 4))
            l = int(rng.integers(2, 7))
            entries = [(int(rng.choice([1, -1])), tuple(int(x) for x in rng.integers(-20, 21, d)))
                       for _ in range(l)]
            assert check_rearrangement_bound(IndexTuple(entries))


def _brute_force_class(t, key):
    plus = [key(j) for j in t if j.delta == 1]
    minus = [key(j) for j in t if j.delta == -1]
    if len(plus) != len(minus):
        return False
    return any(list(p) == minus for p in permutations(plus))


class TestResonantClasses:
    def test_super_action_examples(self):
        assert is_super_action_resonant(T((1, 3), (-1, -3)))
        assert not is_super_action_resonant(T((1, 1), (1, 1), (-1, 0)))
        t = T((1, (1, 0)), (-1, (0, 1)))
        assert is_super_action_resonant(t)
        assert _brute_force_class(t, lambda j: sum(x * x for x in j.a))

    def test_action_examples(self):
        assert is_action_resonant(T((1, 3), (-1, 3)))
        assert not is_action_resonant(T((1, 3), (-1, -3)))
        assert is_action_resonant(T((1, 0), (-1, 0), (1, 5), (-1, 5)))

    @given(st.lists(index_strategy(1), min_size=1, max_size=6))
    def test_classes_match_permutation_search(self, entries):
        t = IndexTuple(entries)
        assert is_super_action_resonant(t) == _brute_force_class(t, lambda j: abs(j.a[0]))
        assert is_action_resonant(t) == _brute_force_class(t, lambda j: j.a)

    @given(tuples)
    def test_action_class_inside_super_action_class(self, entries):
        t = IndexTuple(entries)
        if is_action_resonant(t):
            assert is_super_action_resonant(t)


class TestOrbitsAndBoxes:
    def test_orbit_size(self):
        assert orbit_size((1, 1, 1)) == 1
        assert orbit_size((1, 2, 2)) == 3
        assert orbit_size((1, 2, 3, 4)) == 24

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=6))
    def test_orbit_size_counts_distinct_orderings(self, items):
        assert orbit_size(tuple(sorted(items))) == len(set(permutations(items)))

    def test_box_slots(self):
        box = ModeBox(2, 1)
        assert len(box) == 9
        assert box.slot(encode(LatticeIndex(-1, (0, 0)))) == 9 + box.position[(0, 0)]
        with pytest.raises(ValueError):
            box.slot(encode(LatticeIndex(1, (2, 0))))


class TestAppendixSums:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_weight_sums_increase_and_stay_below_bound(self, d):
        cutoffs = [1, 2, 4, 8] if d < 3 else [1, 2, 4]
        sums = [weight_sum(d, M, d + 1) for M in cutoffs]
        assert all(a < b for a, b in zip(sums, sums[1:]))
        assert sums[-1] < 3 ** d

    def test_one_dimensional_sum_limit(self):
        # sum_a (1+|a|)^-2 over Z equals pi^2/3 - 1
        assert weight_sum(1, 4000, 2) == pytest.approx(math.pi ** 2 / 3 - 1, abs=1e-3)

    @pytest.mark.parametrize("d", [1, 2])
    def test_convolution_sums(self, d):
        rng = np.random.default_rng(d)
        for _ in range(10):
            j = make_index(int(rng.choice([1, -1])), tuple(int(x) for x in rng.integers(-5, 6, d)))
            assert convolution_sum(j, 6) < 2 ** (d + 3) * 3 ** d
