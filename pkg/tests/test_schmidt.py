import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from bfclab.core_model import CombParams
from bfclab.errors import AllZeroWeights, InvalidOrdering
from bfclab.schmidt import (JSIMatrix, dimension_lower_bound, ideal_jsi, plan_dimensionality,
                            schmidt_from_jsi, schmidt_from_weights)

from oracles import sinc2_hp

TIME_BIN_V = [99.46, 90.17, 81.03, 72.82, 65.60, 59.57, 54.03, 48.68, 43.54, 38.79, 33.71,
              31.47, 29.12, 25.93, 23.79, 20.58]
LINK_V = [98.81, 89.28, 80.54, 71.28, 64.81, 58.54, 52.57, 47.52, 42.03, 37.18, 33.50, 29.46,
          27.90, 24.93, 22.79, 19.83]

weights = st.lists(st.just(0.0) | st.floats(1e-3, 1e6), min_size=1, max_size=40).filter(
    lambda w: sum(w) > 0)


class TestFromWeights:
    def test_uniform(self):
        r = schmidt_from_weights([1, 1, 1, 1])
        np.testing.assert_allclose(r.eigenvalues, [0.25] * 4)
        assert r.schmidt_number == pytest.approx(4.0, abs=1e-12)

    def test_measured_time_bin_visibilities(self):
        assert schmidt_from_weights(TIME_BIN_V).schmidt_number == pytest.approx(13.11, abs=0.01)

    def test_post_distribution_visibilities(self):
        r = schmidt_from_weights(LINK_V)
        assert r.schmidt_number == pytest.approx(12.99, abs=0.01)

    def test_all_zero(self):
        with pytest.raises(AllZeroWeights):
            schmidt_from_weights([0.0, 0.0])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            schmidt_from_weights([1.0, -0.5])

    @given(weights)
    def test_result_invariants(self, w):
        r = schmidt_from_weights(w)
        assert abs(r.eigenvalues.sum() - 1) < 1e-12
        assert np.all(np.diff(r.eigenvalues) <= 0)
        assert 1 <= r.schmidt_number <= len(w)
        assert r.dimension_lower_bound == math.floor(r.schmidt_number ** 2 + 1e-9)

    @given(weights, st.floats(1e-6, 1e6))
    def test_scale_invariance(self, w, c):
        a = schmidt_from_weights(w).schmidt_number
        b = schmidt_from_weights([c * x for x in w]).schmidt_number
        assert b == pytest.approx(a, rel=1e-12)

    @given(weights, st.randoms(use_true_random=False))
    def test_permutation_invariance(self, w, rnd):
        p = list(w)
        rnd.shuffle(p)
        assert schmidt_from_weights(p).schmidt_number == pytest.approx(
            schmidt_from_weights(w).schmidt_number, rel=1e-12)

    @given(st.integers(1, 50), st.floats(1e-3, 1e3))
    def test_uniform_reaches_dimension(self, d, c):
        assert schmidt_from_weights([c] * d).schmidt_number == pytest.approx(d, rel=1e-12)

    @given(st.integers(1, 50), st.integers(0, 49), st.floats(1e-3, 1e3))
    def test_single_weight_is_separable(self, d, k, c):
        w = [0.0] * d
        w[k % d] = c
        assert schmidt_from_weights(w).schmidt_number == 1.0

    @given(weights)
    def test_equality_cases_are_exclusive(self, w):
        k = schmidt_from_weights(w).schmidt_number
        nonzero = [x for x in w if x > 0]
        if len(nonzero) > 1:
            assert k > 1
        if max(w) > min(w) * (1 + 1e-6):
            assert k < len(w)


class TestFromJSI:
    def test_identity_like(self):
        r = schmidt_from_jsi(JSIMatrix(np.fliplr(np.eye(5))))
        assert r.schmidt_number == pytest.approx(5.0)
        assert r.separable_contamination == 0.0

    def test_single_entry(self):
        w = np.zeros((5, 5))
        w[1, 3] = 2.0
        assert schmidt_from_jsi(JSIMatrix(w)).schmidt_number == 1.0

    def test_ideal_model(self):
        jsi = ideal_jsi(CombParams.nominal())
        np.testing.assert_allclose(jsi.anti_diagonal(), [0.694, 0.914, 1, 0.914, 0.694], atol=1e-3)
        r = schmidt_from_jsi(jsi)
        assert r.schmidt_number == pytest.approx(4.89, abs=0.01)
        assert r.separable_contamination == 0.0
        assert np.count_nonzero(jsi.weights) == 5

    def test_anti_diagonal_matches_high_precision_sinc(self):
        c = CombParams.nominal()
        expected = [sinc2_hp(c.sinc_scale * m * c.delta_Omega) for m in range(-2, 3)]
        np.testing.assert_allclose(ideal_jsi(c).anti_diagonal(), expected, rtol=1e-12)

    def test_brute_force_schmidt_number(self):
        c = CombParams.nominal()
        w = [sinc2_hp(c.sinc_scale * m * c.delta_Omega) for m in range(-2, 3)]
        k = sum(w) ** 2 / sum(x * x for x in w)
        assert schmidt_from_jsi(ideal_jsi(c)).schmidt_number == pytest.approx(k, rel=1e-12)

    def test_single_line(self):
        jsi = ideal_jsi(CombParams.nominal().replace(n_lines=1))
        assert jsi.weights.tolist() == [[1.0]]

    def test_cross_talk_contamination(self):
        jsi = ideal_jsi(CombParams.nominal(), cross_talk=0.05)
        r = schmidt_from_jsi(jsi)
        assert 0 < r.separable_contamination < 1
        assert r.schmidt_number == pytest.approx(4.89, abs=0.01)
        assert jsi[1, 0] == pytest.approx(0.05 * 0.5 * (jsi[0, 0] + jsi[1, -1]))

    def test_indexing(self):
        jsi = ideal_jsi(CombParams.nominal())
        assert jsi[2, -2] == jsi.weights[4, 0]
        assert jsi[0, 0] == pytest.approx(1.0)

    @pytest.mark.parametrize("w", [np.ones((4, 4)), np.ones(3), -np.eye(3)])
    def test_invalid_matrices(self, w):
        with pytest.raises(ValueError):
            JSIMatrix(w)

    def test_zero_matrix(self):
        with pytest.raises(AllZeroWeights):
            JSIMatrix(np.zeros((3, 3)))

    def test_bad_cross_talk(self):
        with pytest.raises(ValueError):
            ideal_jsi(CombParams.nominal(), cross_talk=1.0)


class TestDimensionBound:
    @pytest.mark.parametrize("k, expected", [((12.99, 12.99), 168), ((1, 1), 1),
                                             ((4.17, 4.17), 17), ((4.0, 4.0), 16)])
    def test_examples(self, k, expected):
        assert dimension_lower_bound(*k) == expected

    def test_below_one_rejected(self):
        with pytest.raises(ValueError):
            dimension_lower_bound(0.5, 2.0)

    @given(st.floats(1, 100), st.floats(1, 100), st.floats(0, 10))
    def test_monotone(self, a, b, d):
        base = dimension_lower_bound(a, b)
        assert dimension_lower_bound(a + d, b) >= base
        assert dimension_lower_bound(a, b + d) >= base
        assert base >= 1


class TestPlanner:
    def test_two_terahertz_hundred_gigahertz(self):
        p = plan_dimensionality(2e12, 100e9, 1e9)
        assert (p.n_f, p.n_t) == (20, 100)
        assert p.product == pytest.approx(2000)
        assert p.n_f * p.n_t == 2000
        assert p.consistent

    def test_ten_gigahertz_spacing(self):
        assert plan_dimensionality(2e12, 10e9, 1e9).n_f == 200

    def test_nominal_device(self):
        p = plan_dimensionality(245e9, 45.32e9, 1.56e9)
        assert (p.n_f, p.n_t) == (5, 29)

    @pytest.mark.parametrize("args", [(1e9, 1e10, 1e8), (1e12, 1e10, 1e11), (1e12, 1e10, 0.0)])
    def test_ordering(self, args):
        with pytest.raises(InvalidOrdering):
            plan_dimensionality(*args)

    @given(st.integers(2, 200), st.integers(2, 200), st.floats(1e8, 1e10))
    def test_exact_when_divisible(self, nf, nt, lw):
        fsr = nt * lw
        p = plan_dimensionality(nf * fsr, fsr, lw)
        assert (p.n_f, p.n_t) == (nf, nt)
        assert p.consistent

    @given(st.floats(1e11, 1e13), st.floats(1e9, 1e11), st.floats(1e7, 1e9))
    def test_floor_never_exceeds_product(self, b, f, lw):
        assume(b > f > lw)
        p = plan_dimensionality(b, f, lw)
        assert p.n_f * p.n_t <= p.product * (1 + 1e-9)
