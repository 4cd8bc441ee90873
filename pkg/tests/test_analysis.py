import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barycenter import (
    CuriosityDistribution,
    InvalidValue,
    ScaledComplexWeight,
    ZeroDenominator,
    f_and_fbar,
    finite_difference_gradient,
    finite_difference_hessian,
    interference_factor_sq,
    make_oracle,
    make_record,
    noise_prediction,
    noise_prediction_from_arrays,
    predicted_mean_step,
    predicted_step_variance,
    predicted_weight_discount,
    quotient_moments,
    stream,
)


def constant(c):
    return lambda x: np.full(np.shape(x)[:-1], c, dtype=float)


class TestDerivatives:
    def test_sphere_gradient(self):
        c = np.array([1.0, -2.0, 0.5])
        f = make_oracle("sphere", center=c).func
        rng = np.random.default_rng(0)
        for x in rng.normal(size=(10, 3)):
            np.testing.assert_allclose(finite_difference_gradient(f, x, 1e-5), 2 * (x - c), atol=1e-8)

    def test_constant(self):
        np.testing.assert_array_equal(finite_difference_gradient(constant(3.0), np.array([0.2, 0.4])), 0.0)

    def test_linear_exact(self):
        g = np.array([1.5, -2.0])
        f = make_oracle("linear", offset=0.0, gradient=g).func
        np.testing.assert_allclose(finite_difference_gradient(f, np.array([0.25, 0.5]), 0.125), g, rtol=1e-15)

    def test_batched(self):
        f = make_oracle("quadratic").func
        x = np.random.default_rng(1).normal(size=(7, 2))
        np.testing.assert_allclose(finite_difference_gradient(f, x), x * [4.0, 1.0], atol=1e-8)

    def test_hessian(self):
        f = make_oracle("rosenbrock").func
        x = np.array([0.5, -0.3])
        exact = np.array([[1200 * x[0] ** 2 - 400 * x[1] + 2, -400 * x[0]], [-400 * x[0], 200.0]])
        h = finite_difference_hessian(f, x)
        np.testing.assert_allclose(h, exact, rtol=1e-5)
        np.testing.assert_array_equal(h, h.T)


class TestGains:
    def test_empty_mass(self):
        assert f_and_fbar(0.0, 2.0, 1.0) == (1.0, 0.0)
        F, Fbar = f_and_fbar(ScaledComplexWeight.zero(), 2.0, 1.0)
        assert (F, Fbar) == (1.0, 0.0)

    def test_equal_masses(self):
        F, Fbar = f_and_fbar(math.exp(-0.7), 0.7, 1.0)
        assert F == pytest.approx(0.5, rel=1e-15)
        assert Fbar == pytest.approx(0.25, rel=1e-15)

    def test_huge_mass(self):
        F, Fbar = f_and_fbar(ScaledComplexWeight.from_log(5000.0), 0.0, 1.0)
        assert F < 1e-300 and Fbar < 1e-300

    def test_complex_rejected(self):
        with pytest.raises(InvalidValue):
            f_and_fbar(1.0, 1.0, 1 + 1j)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, 1e6), st.floats(-50, 50), st.floats(0.01, 10))
    def test_identities(self, m, f, nu):
        F, Fbar = f_and_fbar(m, f, nu)
        assert 0.0 <= F <= 1.0 and 0.0 <= Fbar <= 0.25
        assert Fbar == pytest.approx(F * (1 - F), abs=1e-15)


class TestMeanStep:
    def test_constant_goal_zero_mean(self):
        dist = CuriosityDistribution.isotropic(2, 0.01)
        out = predicted_mean_step(1.0, np.zeros(2), constant(1.0), dist, 1.0, samples=10_000)
        np.testing.assert_array_equal(out.mean, 0.0)

    def test_constant_goal_closed_form(self):
        dist = CuriosityDistribution.isotropic(2, 0.01, mean=[1.0, 0.0])
        m = 3.0
        out = predicted_mean_step(m, np.zeros(2), constant(0.5), dist, 2.0, samples=10_000)
        w = math.exp(-1.0)
        np.testing.assert_allclose(out.mean, [w / (m + w), 0.0], rtol=1e-12)

    def test_points_against_gradient(self):
        f = make_oracle("quadratic").func
        dist = CuriosityDistribution.isotropic(2, 0.01)
        out = predicted_mean_step(math.exp(-2.5), np.array([1.0, 1.0]), f, dist, 1.0, samples=50_000)
        grad = np.array([4.0, 1.0])
        assert out.mean @ grad < 0

    def test_workers_do_not_change_result(self):
        f = make_oracle("quadratic").func
        dist = CuriosityDistribution.isotropic(2, 0.01)
        a = predicted_mean_step(1.0, np.ones(2), f, dist, 1.0, samples=40_000, seed=3, workers=1)
        b = predicted_mean_step(1.0, np.ones(2), f, dist, 1.0, samples=40_000, seed=3, workers=4)
        np.testing.assert_array_equal(a.mean, b.mean)


class TestStepVariance:
    def test_constant_goal(self):
        dist = CuriosityDistribution.gaussian([0.0, 0.0], [[0.02, 0.005], [0.005, 0.01]])
        m = 2.0
        out = predicted_step_variance(m, np.zeros(2), constant(0.0), dist, 1.0, samples=10_000)
        F = 1.0 / (m + 1.0)
        np.testing.assert_allclose(out.covariance, dist.covariance * F * F, rtol=1e-12)

    def test_small_nu_limit(self):
        f = make_oracle("quadratic").func
        dist = CuriosityDistribution.isotropic(2, 0.01)
        out = predicted_step_variance(1.0, np.zeros(2), f, dist, 1e-9, samples=20_000)
        np.testing.assert_allclose(out.covariance, 0.25 * dist.covariance, rtol=1e-7, atol=1e-20)

    def test_needs_zero_mean(self):
        dist = CuriosityDistribution.isotropic(2, 0.01, mean=[0.1, 0.0])
        with pytest.raises(InvalidValue):
            predicted_step_variance(1.0, np.zeros(2), constant(0.0), dist, 1.0)


class TestInterference:
    def test_origin(self):
        assert interference_factor_sq(0.0, 0.0) == 1.0
        assert interference_factor_sq(1e-8, 1e-8) == pytest.approx(1.0)

    def test_complete_cancellation(self):
        assert interference_factor_sq(0.0, math.pi) == pytest.approx(0.0, abs=1e-30)

    def test_r1_qpi(self):
        expected = math.sinh(1.0) ** 2 / (1 + math.pi**2)
        assert interference_factor_sq(1.0, math.pi) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.127061, abs=1e-6)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-5, 5), st.floats(-20, 20))
    def test_matches_complex_sinh(self, r, q):
        c = complex(r, q)
        if abs(c) < 1e-6:
            return
        direct = abs(cmath.sinh(c) / c) ** 2
        assert interference_factor_sq(r, q) == pytest.approx(direct, rel=1e-11, abs=1e-300)

    def test_real_nu_no_discount(self):
        assert predicted_weight_discount(2.0, [1.0, 3.0], [0.5, 0.2]) == pytest.approx(1.0, rel=1e-15)

    def test_discount_tenth(self):
        g = np.array([1.0, 2.0])
        delta = math.pi / (3 * g)
        assert predicted_weight_discount(1 + 3j, g, delta) == pytest.approx(0.1, rel=1e-12)

    def test_flat_axis(self):
        # an axis with zero slope contributes no discount
        assert predicted_weight_discount(1 + 3j, [0.0, 1.0], [0.3, math.pi / 3]) == pytest.approx(
            1 / math.sqrt(10), rel=1e-12
        )


class TestNoise:
    def test_zero_sigma(self):
        x = np.linspace(0, 1, 5)
        out = noise_prediction_from_arrays(x, x**2, 1.0, 0.0)
        np.testing.assert_array_equal(out.mean_shift, 0.0)
        np.testing.assert_array_equal(out.covariance, 0.0)

    def test_single_record(self):
        out = noise_prediction([make_record([0.4, 2.0], 1.0, 1.0)], 1.0, 0.3)
        np.testing.assert_allclose(out.mean_shift, 0.0, atol=1e-16)
        np.testing.assert_allclose(out.covariance, 0.0, atol=1e-15)

    def test_shift_toward_flat_average(self):
        # noise pulls the barycenter toward the unweighted (squared-weight) mean
        x = np.linspace(0, 1, 20)
        out = noise_prediction_from_arrays(x, 4 * (x - 0.3) ** 2, 1.0, 0.05)
        assert np.sign(out.mean_shift[0]) == np.sign(out.eta_bar[0] - out.eta_bar2[0])
        assert out.covariance[0, 0] > 0

    def test_exact_gain(self):
        x = np.linspace(0, 1, 4)
        a = noise_prediction_from_arrays(x, x, 2.0, 0.1)
        b = noise_prediction_from_arrays(x, x, 2.0, 0.1, exact_gain=True)
        assert a.gain == pytest.approx(0.04)
        assert b.gain == pytest.approx(math.expm1(0.04))


class TestQuotient:
    def test_zero_variance(self):
        a, b, v = np.array([1.0, 2.0]), np.array([[3.0, -1.0]]), np.array([0.5, 0.25])
        mean, cov = quotient_moments(a, b, v, np.zeros((2, 2)))
        np.testing.assert_array_equal(mean, [(b @ v)[0] / (a @ v)])
        np.testing.assert_array_equal(cov, 0.0)

    def test_b_equals_a(self):
        a = np.array([1.0, 2.0, 0.5])
        V = np.diag([0.01, 0.02, 0.03])
        mean, cov = quotient_moments(a, a, np.array([1.0, 1.0, 2.0]), V)
        np.testing.assert_allclose(mean, [1.0], rtol=1e-15)
        np.testing.assert_allclose(cov, 0.0, atol=1e-17)

    def test_monte_carlo_example(self):
        a, b, vbar = np.array([1.0, 1.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])
        V = 0.01 * np.eye(2)
        mean, cov = quotient_moments(a, b, vbar, V)
        v = stream(2024).multivariate_normal(vbar, V, size=1_000_000)
        q = (v @ b) / (v @ a)
        se = q.std(ddof=1) / 1000.0
        assert abs(q.mean() - mean[0]) <= 3 * se
        assert abs(q.var(ddof=1) / cov[0, 0] - 1) <= 0.10

    def test_zero_denominator(self):
        with pytest.raises(ZeroDenominator):
            quotient_moments([1.0, -1.0], [[1.0, 0.0]], [1.0, 1.0], np.eye(2))
