import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import polynomial as npoly

from uavplan import cheb


def lagrange_weight_oracle(points):
    """Exact integrals over [-1, 1] of the Lagrange basis polynomials."""
    out = []
    for k in range(len(points)):
        others = np.delete(points, k)
        coef = npoly.polyfromroots(others) / np.prod(points[k] - others)
        anti = npoly.polyint(coef)
        out.append(npoly.polyval(1.0, anti) - npoly.polyval(-1.0, anti))
    return np.array(out)


class TestPoints:
    def test_degree_one(self):
        assert cheb.cgl_points(1).tolist() == [-1.0, 1.0]

    def test_degree_two(self):
        assert cheb.cgl_points(2).tolist() == [-1.0, 0.0, 1.0]

    def test_degree_four_closed_form(self):
        s = math.sqrt(2) / 2
        np.testing.assert_allclose(cheb.cgl_points(4), [-1, -s, 0, s, 1], atol=1e-15)

    @pytest.mark.parametrize("N", [1, 3, 8, 17, 64, 256])
    def test_ascending_cosine_form(self, N):
        x = cheb.cgl_points(N)
        np.testing.assert_allclose(x, np.cos((N - np.arange(N + 1)) * np.pi / N), atol=1e-14)
        assert x[0] == -1.0 and x[-1] == 1.0
        assert np.all(np.diff(x) > 0)

    @pytest.mark.parametrize("N", [0, -1, 257])
    def test_invalid_degree(self, N):
        with pytest.raises(ValueError):
            cheb.cgl_points(N)


class TestWeights:
    def test_degree_one(self):
        np.testing.assert_allclose(cheb.cc_weights(1), [1, 1], atol=1e-15)

    def test_degree_two(self):
        np.testing.assert_allclose(cheb.cc_weights(2), [1 / 3, 4 / 3, 1 / 3], atol=1e-15)

    @pytest.mark.parametrize("N", [3, 4, 7, 10])
    def test_match_lagrange_integrals(self, N):
        np.testing.assert_allclose(cheb.cc_weights(N), lagrange_weight_oracle(cheb.cgl_points(N)), atol=1e-12)

    @pytest.mark.parametrize("N", range(1, 65))
    def test_sum_is_two(self, N):
        assert abs(cheb.cc_weights(N).sum() - 2.0) <= 1e-12

    @pytest.mark.parametrize("N", [2, 5, 12])
    def test_exact_for_degree_n(self, N):
        x = cheb.cgl_points(N)
        w = cheb.cc_weights(N)
        for j in range(N + 1):
            exact = (1 - (-1) ** (j + 1)) / (j + 1)
            assert abs(w @ x ** j - exact) <= 1e-12

    def test_nonnegative(self):
        for N in range(1, 80):
            assert np.all(cheb.cc_weights(N) >= 0)


class TestDiffMatrix:
    def test_degree_one(self):
        np.testing.assert_allclose(cheb.diff_matrix([-1.0, 1.0]), [[-0.5, 0.5], [-0.5, 0.5]], atol=1e-15)

    def test_square_on_three_points(self):
        D = cheb.diff_matrix(cheb.cgl_points(2))
        np.testing.assert_allclose(D @ np.array([1.0, 0.0, 1.0]), [-2, 0, 2], atol=1e-14)

    @pytest.mark.parametrize("N", [1, 4, 16, 50])
    def test_rows_sum_to_zero(self, N):
        D = cheb.collocation_grid(N).diff_matrix
        assert np.max(np.abs(D.sum(axis=1))) <= 1e-10

    @pytest.mark.parametrize("N", [3, 8, 14])
    def test_monomials(self, N):
        g = cheb.collocation_grid(N)
        t = g.points
        for j in range(1, N + 1):
            np.testing.assert_allclose(g.diff_matrix @ t ** j, j * t ** (j - 1), atol=1e-9)

    def test_sine_derivative(self):
        g = cheb.collocation_grid(20)
        assert np.max(np.abs(g.diff_matrix @ np.sin(g.points) - np.cos(g.points))) <= 1e-10

    def test_repeated_points_rejected(self):
        with pytest.raises(ValueError):
            cheb.diff_matrix([-1.0, 0.0, 0.0, 1.0])

    def test_generic_points_match_closed_form(self):
        x = cheb.cgl_points(9)
        np.testing.assert_allclose(cheb.diff_matrix(x), cheb.collocation_grid(9).diff_matrix, atol=1e-12)


class TestScaling:
    def test_identity_transform(self):
        g = cheb.collocation_grid(6)
        s = cheb.scale_grid(g, -1.0, 1.0)
        np.testing.assert_allclose(s.times, g.points, atol=1e-15)
        np.testing.assert_allclose(s.scaled_weights, g.weights, atol=1e-15)
        np.testing.assert_allclose(s.scaled_diff, g.diff_matrix, atol=1e-12)

    def test_zero_two(self):
        s = cheb.scale_grid(cheb.collocation_grid(2), 0.0, 2.0)
        np.testing.assert_allclose(s.times, [0, 1, 2], atol=1e-15)
        np.testing.assert_allclose(s.scaled_weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-15)
        np.testing.assert_allclose(s.scaled_diff, cheb.collocation_grid(2).diff_matrix, atol=1e-15)

    def test_weights_sum_to_length(self):
        s = cheb.scale_grid(cheb.collocation_grid(9), 0.0, 4.0)
        assert abs(s.scaled_weights.sum() - 4.0) <= 1e-12

    @pytest.mark.parametrize("t0,tf", [(1.0, 1.0), (2.0, 1.0)])
    def test_bad_interval(self, t0, tf):
        with pytest.raises(ValueError):
            cheb.scale_grid(cheb.collocation_grid(3), t0, tf)


class TestInterpolationAndQuadrature:
    def test_node_values_exact(self, rng):
        s = cheb.scale_grid(cheb.collocation_grid(7), 0.3, 2.9)
        v = rng.normal(size=8)
        for t, val in zip(s.times, v):
            assert cheb.interpolate(v, s, t) == val

    def test_constant(self):
        s = cheb.scale_grid(cheb.collocation_grid(5), 0.0, 3.0)
        np.testing.assert_allclose(cheb.interpolate(np.full(6, 2.5), s, np.linspace(0, 3, 13)), 2.5, atol=1e-14)

    def test_cubic(self):
        s = cheb.scale_grid(cheb.collocation_grid(3), -1.0, 1.0)
        assert abs(cheb.interpolate(s.times ** 3, s, 0.5) - 0.125) <= 1e-14

    def test_no_extrapolation(self):
        s = cheb.scale_grid(cheb.collocation_grid(3), 0.0, 1.0)
        with pytest.raises(ValueError):
            cheb.interpolate(np.zeros(4), s, 1.1)

    def test_quadrature_examples(self):
        s = cheb.scale_grid(cheb.collocation_grid(4), 0.0, 2.0)
        assert abs(cheb.quadrature(np.ones(5), s) - 2.0) <= 1e-14
        s = cheb.scale_grid(cheb.collocation_grid(16), -1.0, 1.0)
        assert abs(cheb.quadrature(np.exp(s.times), s) - (math.e - 1 / math.e)) <= 1e-12
        s = cheb.scale_grid(cheb.collocation_grid(2), -1.0, 1.0)
        assert abs(cheb.quadrature(s.times ** 2, s) - 2 / 3) <= 1e-15

    def test_quadrature_length_mismatch(self):
        with pytest.raises(ValueError):
            cheb.quadrature(np.ones(3), cheb.scale_grid(cheb.collocation_grid(4), 0.0, 1.0))

    def test_spectral_convergence(self):
        exact = math.e - 1 / math.e

        def err(N):
            s = cheb.scale_grid(cheb.collocation_grid(N), -1.0, 1.0)
            return abs(cheb.quadrature(np.exp(s.times), s) - exact)

        assert err(16) <= 1e-4 * err(4)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(1, 40), a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2 ** 32 - 1))
def test_interpolation_is_linear(N, a, b, seed):
    r = np.random.default_rng(seed)
    s = cheb.scale_grid(cheb.collocation_grid(N), 0.0, 1.0)
    f, g = r.normal(size=N + 1), r.normal(size=N + 1)
    t = r.uniform(0, 1, 5)
    lhs = cheb.interpolate(a * f + b * g, s, t)
    rhs = a * cheb.interpolate(f, s, t) + b * cheb.interpolate(g, s, t)
    scale = 1 + np.abs(f).max() + np.abs(g).max()
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale * (1 + abs(a) + abs(b))


@settings(max_examples=60, deadline=None)
@given(N=st.integers(1, 64), t0=st.floats(-100, 100), length=st.floats(1e-3, 200))
def test_scaled_constant_quadrature(N, t0, length):
    s = cheb.scale_grid(cheb.collocation_grid(N), t0, t0 + length)
    assert abs(cheb.quadrature(np.ones(N + 1), s) - (s.tf - s.t0)) <= 1e-12 * max(1.0, length)
