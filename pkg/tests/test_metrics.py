import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from asymmix.exceptions import ContractViolation
from asymmix.metrics import dice, wilcoxon_signed_rank


class TestDice:
    def test_identical(self):
        m = np.zeros((4, 4), bool)
        m[1:3, 1:3] = True
        assert dice(m, m).score == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), bool)
        b = np.zeros((4, 4), bool)
        a[0, :2] = True
        b[3, :2] = True
        assert dice(a, b).score == 0.0

    def test_half_overlap(self):
        a = np.zeros(8, bool)
        b = np.zeros(8, bool)
        a[:4] = True
        b[2:6] = True
        s = dice(a, b)
        assert (s.tp, s.fp, s.fn) == (2, 2, 2)
        assert s.score == 0.5

    def test_both_empty(self):
        assert dice(np.zeros((3, 3)), np.zeros((3, 3))).score == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            dice(np.zeros((2, 3)), np.zeros((3, 2)))

    @settings(max_examples=50, deadline=None)
    @given(arrays(bool, (5, 6)), arrays(bool, (5, 6)))
    def test_symmetry_and_bounds(self, a, b):
        ab, ba = dice(a, b), dice(b, a)
        assert ab.score == ba.score
        assert ab.tp == ba.tp and ab.fp == ba.fn and ab.fn == ba.fp
        assert 0.0 <= ab.score <= 1.0


def _average_ranks(values):
    return [
        sum(1 for w in values if w < v) + (sum(1 for w in values if w == v) + 1) / 2
        for v in values
    ]


def brute_force_p(d):
    d = [x for x in d if x != 0]
    n = len(d)
    ranks = _average_ranks([abs(x) for x in d])
    observed = sum(r for r, x in zip(ranks, d) if x > 0)
    null = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product((0, 1), repeat=n)]
    lower = sum(w <= observed + 1e-9 for w in null) / 2**n
    upper = sum(w >= observed - 1e-9 for w in null) / 2**n
    return observed, min(1.0, 2 * min(lower, upper))


class TestWilcoxon:
    def test_three_positive(self):
        res = wilcoxon_signed_rank([1, 2, 3], [0, 0, 0])
        assert res.statistic == 6 and res.method == "exact"
        assert res.p_value == 0.25

    def test_symmetric_pair(self):
        assert wilcoxon_signed_rank([1, -1], [0, 0]).p_value == 1.0

    def test_all_zero(self):
        res = wilcoxon_signed_rank([0.5, 0.7], [0.5, 0.7])
        assert (res.n_effective, res.p_value, res.method) == (0, 1.0, "exact")

    def test_zeros_dropped(self):
        res = wilcoxon_signed_rank([1, 2, 3, 5], [0, 0, 0, 5])
        assert res.n_effective == 3 and res.p_value == 0.25

    def test_invalid_input(self):
        with pytest.raises(ContractViolation):
            wilcoxon_signed_rank([1, 2], [1])
        with pytest.raises(ContractViolation):
            wilcoxon_signed_rank([], [])

    def test_matches_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 11))
            # rounding creates ties and zeros
            d = np.round(rng.normal(0.3, 1.0, n), 1)
            res = wilcoxon_signed_rank(d, np.zeros(n))
            if res.n_effective == 0:
                continue
            w, p = brute_force_p(d.tolist())
            assert res.statistic == pytest.approx(w, abs=1e-12)
            assert res.p_value == pytest.approx(p, abs=1e-12)

    def test_method_switch(self):
        d = np.arange(1, 27, dtype=float)
        assert wilcoxon_signed_rank(d[:25], 0 * d[:25]).method == "exact"
        assert wilcoxon_signed_rank(d, 0 * d).method == "normal-approx"

    def test_normal_approximation_close_to_exact(self):
        rng = np.random.default_rng(30)
        for _ in range(5):
            a = rng.normal(0.2, 1.0, 30)
            b = rng.normal(0.0, 1.0, 30)
            ours = wilcoxon_signed_rank(a, b)
            exact = stats.wilcoxon(a, b, method="exact").pvalue
            assert ours.method == "normal-approx"
            assert abs(ours.p_value - exact) < 0.02

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        # dyadic values keep the shifted differences exact
        a = rng.integers(-64, 64, 12) / 8.0
        b = rng.integers(-64, 64, 12) / 8.0
        assert wilcoxon_signed_rank(a, b) == wilcoxon_signed_rank(a + 3.0, b + 3.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=40))
    def test_p_in_unit_interval(self, d):
        p = wilcoxon_signed_rank(d, [0] * len(d)).p_value
        assert 0.0 < p <= 1.0
