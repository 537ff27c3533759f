"""Property-based checks of structural invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from lpvss import SubMarkovKey, bfr, random_stable_model, true_sub_markov
from lpvss.markov import (enumerate_keys, enumerate_matrix_keys, nf_count,
                          word_product)


@st.composite
def cab_keys(draw, npsi=3):
    gamma = draw(st.integers(0, npsi))
    alpha = tuple(draw(st.lists(st.integers(0, npsi), max_size=4)))
    beta = draw(st.integers(0, npsi))
    return SubMarkovKey.cab(gamma, alpha, beta)


class TestKeyProperties:
    @given(cab_keys())
    def test_parse_inverts_str(self, key):
        assert SubMarkovKey.parse(str(key)) == key

    @given(st.integers(0, 9))
    def test_d_keys_round_trip(self, s):
        key = SubMarkovKey.d(s)
        assert SubMarkovKey.parse(str(key)) == key

    @given(cab_keys(), cab_keys())
    def test_ordering_is_total_and_consistent(self, k1, k2):
        assert (k1 < k2) or (k2 < k1) or (k1.sort_key == k2.sort_key)
        if k1 < k2:
            assert not (k2 < k1)


class TestCountProperties:
    @given(st.integers(0, 4), st.integers(0, 3), st.integers(1, 3),
           st.integers(1, 3))
    @settings(deadline=None)
    def test_enumeration_length_matches_closed_form(self, npsi, nh, nu, ny):
        cols, nf = enumerate_keys(npsi, nh, nu, ny)
        assert nf == nf_count(npsi, nh, nu)
        assert len(cols) == nf

    @given(st.integers(0, 4), st.integers(0, 3))
    @settings(deadline=None)
    def test_matrix_keys_unique_and_lag_bounded(self, npsi, nh):
        keys = enumerate_matrix_keys(npsi, nh)
        assert len(keys) == len(set(keys))
        assert all(k.lag <= nh for k in keys)


class TestWordProperties:
    @given(st.lists(st.integers(0, 2), max_size=3),
           st.lists(st.integers(0, 2), max_size=3))
    @settings(deadline=None, max_examples=25)
    def test_word_product_concatenation(self, w1, w2):
        model = random_stable_model(3, 1, 1, 2, seed=0)
        left = word_product(model, w1) @ word_product(model, w2)
        joint = word_product(model, tuple(w1) + tuple(w2))
        np.testing.assert_allclose(left, joint, atol=1e-12)

    @given(st.lists(st.integers(0, 2), max_size=3), st.integers(0, 2),
           st.integers(0, 2))
    @settings(deadline=None, max_examples=25)
    def test_true_parameters_factor_through_words(self, alpha, gamma, beta):
        model = random_stable_model(3, 2, 2, 2, seed=1)
        key = SubMarkovKey.cab(gamma, alpha, beta)
        manual = (model.c.coeffs[gamma] @ word_product(model, alpha)
                  @ model.b.coeffs[beta])
        np.testing.assert_allclose(true_sub_markov(model, key), manual,
                                   atol=1e-12)


class TestBfrProperties:
    @given(st.integers(0, 1000), st.floats(0.1, 10.0))
    @settings(deadline=None, max_examples=30)
    def test_bounded_and_scale_covariant(self, seed, scale):
        rng = np.random.default_rng(seed)
        y = rng.standard_normal((40, 2))
        yhat = y + 0.5 * rng.standard_normal((40, 2))
        val = bfr(y, yhat)
        assert 0.0 <= val <= 100.0
        # jointly rescaling reference and estimate leaves the score unchanged
        assert abs(bfr(scale * y, scale * yhat) - val) < 1e-8
