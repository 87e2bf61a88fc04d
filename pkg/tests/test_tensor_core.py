"""Tests for the chart-level metric machinery."""

import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from normalshift.errors import (
    AsymmetricMetric,
    DimensionTooSmall,
    NotPositiveDefinite,
    ZeroVelocity,
)
from normalshift.tensor_core import (
    MetricField,
    christoffel_at,
    inverse_metric_at,
    lower_index,
    metric_at,
    raise_index,
    unit_direction,
)

from helpers import conformal_metric, diagonal_metric, euclidean_metric, wavy_conformal_metric


# points where every test metric is well-behaved (x^1 away from 0 for the
# diagonal one)
GOOD_POINTS = st.builds(
    np.array,
    st.lists(st.floats(min_value=0.5, max_value=2.0), min_size=3, max_size=3),
)


def random_spd_metric(a):
    """Constant SPD metric built from an arbitrary square matrix."""
    a = np.asarray(a, dtype=float)
    gmat = a.T @ a + np.eye(a.shape[0])
    return MetricField(dim=a.shape[0], g=lambda x: gmat.copy())


class TestMetricAt:
    def test_euclidean_is_identity(self):
        m = euclidean_metric()
        assert np.array_equal(metric_at(m, np.zeros(3)), np.eye(3))

    def test_conformal_with_zero_exponent_is_identity(self):
        m = MetricField(dim=3, g=lambda x: np.exp(-2.0 * 0.0) * np.eye(3))
        assert np.allclose(metric_at(m, np.ones(3)), np.eye(3), atol=0, rtol=0)

    def test_conformal_point_value(self):
        # exp(-2 * 0.3) * I at x = (0.3, 0, 0); the factor cross-checked
        # against the scalar exponential directly
        m = conformal_metric()
        got = metric_at(m, np.array([0.3, 0.0, 0.0]))
        assert np.allclose(got, math.exp(-0.6) * np.eye(3), rtol=1e-15)

    def test_asymmetric_metric_rejected(self):
        skew = np.eye(3)
        skew[0, 1] = 1e-6
        m = MetricField(dim=3, g=lambda x: skew)
        with pytest.raises(AsymmetricMetric):
            metric_at(m, np.zeros(3))

    def test_tiny_asymmetry_is_symmetrized(self):
        skew = np.eye(3)
        skew[0, 1] = 1e-14
        m = MetricField(dim=3, g=lambda x: skew)
        got = metric_at(m, np.zeros(3))
        assert np.array_equal(got, got.T)

    def test_not_positive_definite_rejected(self):
        m = MetricField(dim=3, g=lambda x: np.diag([1.0, -1.0, 1.0]))
        with pytest.raises(NotPositiveDefinite):
            metric_at(m, np.zeros(3))

    def test_dimension_below_three_rejected(self):
        with pytest.raises(DimensionTooSmall):
            MetricField(dim=2, g=lambda x: np.eye(2))


class TestInverseMetric:
    def test_euclidean(self):
        m = euclidean_metric()
        assert np.allclose(inverse_metric_at(m, np.zeros(3)), np.eye(3))

    def test_conformal_inverse_is_scalar_inverse(self):
        m = conformal_metric()
        x = np.array([0.7, -0.2, 1.1])
        assert np.allclose(
            inverse_metric_at(m, x), math.exp(2.0 * 0.7) * np.eye(3), rtol=1e-12
        )

    @seed(7)
    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 3), elements=st.floats(-2.0, 2.0)))
    def test_multiply_back_residual(self, a):
        m = random_spd_metric(a)
        x = np.zeros(3)
        prod = metric_at(m, x) @ inverse_metric_at(m, x)
        assert np.max(np.abs(prod - np.eye(3))) < 1e-10


class TestChristoffel:
    def test_flat_metric_vanishes(self):
        m = euclidean_metric()
        gamma = christoffel_at(m, np.array([0.4, 1.0, -2.0])).gamma
        assert np.array_equal(gamma, np.zeros((3, 3, 3)))

    @seed(11)
    @settings(max_examples=25, deadline=None)
    @given(GOOD_POINTS)
    def test_conformal_closed_form(self, x):
        # For g = exp(-2 f) * delta on a flat background the connection is
        # gamma^k_ij = -d_i f delta^k_j - d_j f delta^k_i + delta_ij d_k f.
        # Here f = x^1, so df = (1, 0, 0).
        m = conformal_metric()
        gamma = christoffel_at(m, x).gamma
        df = np.array([1.0, 0.0, 0.0])
        expected = np.zeros((3, 3, 3))
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    expected[k, i, j] = (
                        -df[i] * (k == j) - df[j] * (k == i) + (i == j) * df[k]
                    )
        assert np.allclose(gamma, expected, atol=1e-12)

    def test_diagonal_metric_values(self):
        # Hand evaluation for diag(1, (x^1)^2, 1), frozen from a symbolic
        # cross-check: gamma^2_12 = gamma^2_21 = 1/x^1, gamma^1_22 = -x^1,
        # everything else zero.  At x^1 = 2 the nonzero values are 1/2, -2.
        m = diagonal_metric()
        gamma = christoffel_at(m, np.array([2.0, 0.3, -1.0])).gamma
        expected = np.zeros((3, 3, 3))
        expected[1, 0, 1] = expected[1, 1, 0] = 0.5
        expected[0, 1, 1] = -2.0
        assert np.allclose(gamma, expected, atol=1e-13)

    @pytest.mark.parametrize(
        "make", [conformal_metric, diagonal_metric], ids=["conformal", "diagonal"]
    )
    def test_finite_difference_matches_analytic(self, make):
        analytic = make(analytic=True)
        fd = make(analytic=False)
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = 0.5 + rng.random(3)
            ga = christoffel_at(analytic, x).gamma
            gf = christoffel_at(fd, x).gamma
            assert np.max(np.abs(ga - gf)) < 1e-6

    @seed(13)
    @settings(max_examples=25, deadline=None)
    @given(GOOD_POINTS)
    def test_lower_index_symmetry_exact(self, x):
        m = wavy_conformal_metric()
        gamma = christoffel_at(m, x).gamma
        assert np.array_equal(gamma, gamma.transpose(0, 2, 1))


class TestUnitDirection:
    def test_axis_aligned(self):
        m = euclidean_metric()
        pr = unit_direction(m, np.zeros(3), np.array([2.0, 0.0, 0.0]))
        assert np.allclose(pr.N_up, [1.0, 0.0, 0.0])
        assert np.allclose(pr.P, np.diag([0.0, 1.0, 1.0]))
        assert pr.speed == pytest.approx(2.0)

    def test_diagonal_direction(self):
        m = euclidean_metric()
        pr = unit_direction(m, np.zeros(3), np.array([1.0, 1.0, 0.0]))
        root = 1.0 / math.sqrt(2.0)
        assert np.allclose(pr.N_up, [root, root, 0.0])
        assert np.max(np.abs(pr.P @ pr.P - pr.P)) < 1e-15
        assert np.max(np.abs(pr.P @ pr.N_up)) < 1e-15

    def test_conformal_speed_and_direction(self):
        # |v|^2 = exp(-2) for v = (1,0,0) at x = (1,0,0), so N^1 = e
        m = conformal_metric()
        pr = unit_direction(m, np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        assert pr.speed == pytest.approx(math.exp(-1.0), rel=1e-14)
        assert pr.N_up[0] == pytest.approx(math.e, rel=1e-14)

    def test_zero_velocity_rejected(self):
        m = euclidean_metric()
        with pytest.raises(ZeroVelocity):
            unit_direction(m, np.zeros(3), np.zeros(3))

    @seed(17)
    @settings(max_examples=60, deadline=None)
    @given(
        GOOD_POINTS,
        arrays(np.float64, (3,), elements=st.floats(-3.0, 3.0)).filter(
            lambda v: np.linalg.norm(v) > 1e-3
        ),
    )
    def test_projector_invariants(self, x, v):
        for m in (euclidean_metric(), wavy_conformal_metric(), diagonal_metric()):
            pr = unit_direction(m, x, v)
            gmat = metric_at(m, x)
            assert np.max(np.abs(pr.P @ pr.P - pr.P)) < 1e-10
            assert np.trace(pr.P) == pytest.approx(2.0, abs=1e-10)
            assert np.max(np.abs(pr.P @ pr.N_up)) < 1e-10
            assert pr.N_up @ gmat @ pr.N_up == pytest.approx(1.0, abs=1e-10)
            assert np.allclose(pr.N_down, gmat @ pr.N_up)


class TestIndexShuffling:
    def test_euclidean_identity(self):
        m = euclidean_metric()
        w = np.array([0.3, -1.0, 2.0])
        assert np.array_equal(lower_index(m, np.zeros(3), w), w)
        assert np.array_equal(raise_index(m, np.zeros(3), w), w)

    def test_conformal_scalar_factor(self):
        m = conformal_metric()
        x = np.array([0.5, 0.0, 0.0])
        w = np.array([1.0, 2.0, 3.0])
        assert np.allclose(lower_index(m, x, w), math.exp(-1.0) * w, rtol=1e-14)

    @seed(19)
    @settings(max_examples=50, deadline=None)
    @given(
        arrays(np.float64, (3, 3), elements=st.floats(-2.0, 2.0)),
        arrays(np.float64, (3,), elements=st.floats(-5.0, 5.0)),
    )
    def test_round_trip(self, a, w):
        m = random_spd_metric(a)
        x = np.zeros(3)
        back = raise_index(m, x, lower_index(m, x, w))
        assert np.max(np.abs(back - w)) < 1e-10
