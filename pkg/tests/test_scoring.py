import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import central_diff, max_rel_err
from ptext.errors import DimensionMismatch, ZeroVector
from ptext.scoring import (
    ScoreMatrix,
    aggregate_fine,
    aggregate_fine_backward,
    coarse_scores,
    cosine,
    ensemble,
    fine_scores,
    word_scores,
    word_weights,
)

cos_values = st.floats(-1.0, 1.0, allow_nan=False)


def column_matrices(max_words=6, max_classes=4):
    return st.tuples(st.integers(1, max_words), st.integers(1, max_classes)).flatmap(
        lambda s: arrays(np.float64, s, elements=cos_values)
    )


class TestCosine:
    def test_identity(self):
        v = np.array([0.3, -2.0, 1.5])
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_diagonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine(np.zeros(2), np.ones(2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine(np.ones(2), np.ones(3))


def test_coarse_identity_row():
    u = np.eye(3)
    assert np.array_equal(coarse_scores(u[0], u), [1.0, 0.0, 0.0])


def test_coarse_single_class():
    assert coarse_scores(np.array([1.0, 0.0]), np.array([[0.6, 0.8]])).shape == (1,)


def test_word_scores_single_word_matches_coarse(rng):
    u = rng.normal(size=(3, 5))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    w = u[1:2] * 0.5 + 0.1
    w /= np.linalg.norm(w)
    assert np.array_equal(word_scores(w, u)[0], coarse_scores(w[0], u))


def test_word_scores_identical_words(rng):
    u = rng.normal(size=(2, 4))
    w = np.tile(rng.normal(size=4), (3, 1))
    p = word_scores(w, u)
    assert np.array_equal(p[0], p[1]) and np.array_equal(p[1], p[2])


class TestAggregate:
    def test_single_word(self):
        assert aggregate_fine(np.array([[0.37, -0.2]])).tolist() == [0.37, -0.2]

    def test_constant_column(self):
        assert aggregate_fine(np.full(5, 0.3)) == pytest.approx(0.3, abs=1e-15)

    def test_worked_value_matches_scalar_oracle(self):
        w8, w2 = math.exp(8), math.exp(2)
        oracle = (0.8 * w8 + 0.2 * w2) / (w8 + w2)
        assert aggregate_fine(np.array([0.8, 0.2]), 0.1) == pytest.approx(oracle, abs=1e-12)

    def test_weights_sum_to_one(self, rng):
        a = word_weights(rng.uniform(-1, 1, (5, 3)))
        assert np.allclose(a.sum(axis=0), 1.0)

    def test_no_overflow_at_tiny_temperature(self):
        assert aggregate_fine(np.array([1.0, -1.0]), 1e-6) == 1.0

    @settings(max_examples=200)
    @given(column_matrices(), st.floats(1e-3, 1e3))
    def test_output_within_column_range(self, p, tau_s):
        q = aggregate_fine(p, tau_s)
        assert np.all(q >= p.min(axis=0) - 1e-12)
        assert np.all(q <= p.max(axis=0) + 1e-12)

    @settings(max_examples=200)
    @given(column_matrices(), st.floats(1e-3, 10.0))
    def test_lies_between_max_minus_entropy_bound_and_max(self, p, tau_s):
        # q = LSE - tau_s * H(a) and LSE >= max, H <= ln O
        q = aggregate_fine(p, tau_s)
        assert np.all(q >= p.max(axis=0) - tau_s * math.log(p.shape[0]) - 1e-12)

    @settings(max_examples=200)
    @given(column_matrices())
    def test_high_temperature_first_order_term(self, p):
        # q - mean = Var(p) / tau_s + O(tau_s^-2)
        tau_s = 1e3
        q = aggregate_fine(p, tau_s)
        first_order = p.mean(axis=0) + p.var(axis=0) / tau_s
        assert np.allclose(q, first_order, atol=2e-6)

    @settings(max_examples=50, deadline=None)
    @given(column_matrices(), st.floats(0.02, 2.0))
    def test_backward_matches_finite_differences(self, p, tau_s):
        g = np.linspace(-1, 1, p.shape[1])
        analytic = aggregate_fine_backward(p, tau_s, g)
        numeric = central_diff(lambda x: float(aggregate_fine(x, tau_s) @ g), p, h=1e-6)
        assert np.allclose(analytic, numeric, atol=1e-5 * max(1.0, 1 / tau_s))


def test_fine_scores_shape(rng):
    u = rng.normal(size=(3, 4))
    words = [rng.normal(size=(k, 4)) for k in (1, 2, 5)]
    assert fine_scores(words, u).shape == (3, 3)


class TestEnsemble:
    def test_sum(self):
        assert ensemble(np.array([0.2, 0.1]), np.array([0.4, 0.3])) == pytest.approx([0.6, 0.4])

    def test_zero_fine(self):
        c = np.array([0.2, -0.7])
        assert np.array_equal(ensemble(c, np.zeros(2)), c)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            ensemble(np.zeros(2), np.zeros(3))


def test_score_matrix_csv_round_trip(rng):
    m = ScoreMatrix(rng.normal(size=(4, 3)), "ensemble", ("dog", "rain", "car horn"))
    back = ScoreMatrix.from_csv(m.to_csv(), "ensemble")
    assert np.array_equal(back.values, m.values)
    assert back.class_names == m.class_names
