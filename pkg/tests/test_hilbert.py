import math

import numpy as np
import pytest

from assocpoly import (
    Basis,
    CoeffVector,
    DomainError,
    SolveOptions,
    chebyshev_to_jacobi,
    classical_connection,
    clenshaw_eval,
    convert,
    elliott_kernel_check,
    hasegawa_torii,
    hilbert_legendre,
    hilbert_uniform_measure,
    jacobi,
    jacobi_to_chebyshev,
    pv_hilbert_oracle,
    solve_associated,
    uniform_chebU_moments,
    uniform_measure,
)

from oracle_utils import legendre_series_derivative

LEG = Basis("jacobi", 0.0, 0.0)


class TestMeasureTransform:
    def test_values(self):
        assert hilbert_uniform_measure(0.0) == 0.0
        assert hilbert_uniform_measure(0.5) == pytest.approx(-math.log(3) / math.pi)
        assert hilbert_uniform_measure(-0.5) == pytest.approx(math.log(3) / math.pi)

    def test_oddness(self, rng):
        x = rng.uniform(0, 0.99, 16)
        np.testing.assert_allclose(
            hilbert_uniform_measure(-x), -hilbert_uniform_measure(x), atol=1e-14
        )

    def test_edge_rejected(self):
        with pytest.raises(DomainError):
            hilbert_uniform_measure(1.0)
        with pytest.raises(DomainError):
            hilbert_uniform_measure(np.array([0.0, -0.9999999999]))

    def test_moments(self):
        w = uniform_chebU_moments(6)
        np.testing.assert_allclose(w, [2, 0, 2 / 3, 0, 2 / 5, 0])
        m = uniform_measure(6)
        assert m.evaluator(0.0) == 0.0


class TestAssociatedRoute:
    def test_constant_is_pure_measure_term(self):
        V1 = solve_associated(jacobi(0, 0), 1, 8)
        x = np.array([0.4, -0.7])
        out = hilbert_legendre(CoeffVector(LEG, np.array([1.0, 0, 0])), V1, x)
        np.testing.assert_allclose(out, hilbert_uniform_measure(x))

    def test_p1_closed_form(self):
        V1 = solve_associated(jacobi(0, 0), 1, 8)
        x = np.array([0.0, 0.3, -0.6])
        out = hilbert_legendre(CoeffVector(LEG, np.array([0.0, 1.0])), V1, x)
        expect = 2 / math.pi + x * hilbert_uniform_measure(x)
        np.testing.assert_allclose(out, expect, atol=1e-14)
        assert out[0] == pytest.approx(2 / math.pi)

    def test_vs_pv_oracle_random_expansion(self, rng):
        n = 24
        c = rng.standard_normal(n) * 0.6 ** np.arange(n)
        V1 = solve_associated(jacobi(0, 0), 1, n)
        pts = rng.uniform(-0.95, 0.95, 8)
        route = hilbert_legendre(CoeffVector(LEG, c), V1, pts)
        dcoef = legendre_series_derivative(c)

        def f(t):
            return clenshaw_eval(jacobi(0, 0), c, t)

        def fp(t):
            return clenshaw_eval(jacobi(0, 0), dcoef, t)

        oracle = np.array([pv_hilbert_oracle(f, x, 1e-11, fprime=fp) for x in pts])
        assert np.abs(route - oracle).max() <= 1e-9

    def test_h_of_even_function_is_odd(self, rng):
        n = 16
        c = np.zeros(n)
        c[0::2] = rng.standard_normal(n // 2) * 0.5 ** np.arange(n // 2)  # even function
        V1 = solve_associated(jacobi(0, 0), 1, n)
        x = rng.uniform(0.05, 0.9, 10)
        plus = hilbert_legendre(CoeffVector(LEG, c), V1, x)
        minus = hilbert_legendre(CoeffVector(LEG, c), V1, -x)
        np.testing.assert_allclose(plus, -minus, atol=1e-10)


class TestToeplitzRoute:
    def test_t0_reduces_to_measure(self):
        cv = CoeffVector(Basis("chebyshev"), np.array([1.0, 0, 0]))
        x = np.array([0.2, -0.5])
        out = hasegawa_torii(cv, uniform_chebU_moments(2), x)
        np.testing.assert_allclose(out, hilbert_uniform_measure(x))

    def test_moment_vector_too_short(self):
        cv = CoeffVector(Basis("chebyshev"), np.ones(8))
        with pytest.raises(DomainError, match="too short"):
            hasegawa_torii(cv, uniform_chebU_moments(3), np.array([0.1]))

    def test_toeplitz_convolution_matches_direct_sum(self, rng):
        # FFT correlation against the O(n^2) double sum
        n = 40
        c = rng.standard_normal(n)
        w = uniform_chebU_moments(n - 1)
        x = rng.uniform(-0.9, 0.9, 5)
        fast = hasegawa_torii(CoeffVector(Basis("chebyshev"), c), w, x)
        direct = np.zeros_like(x)
        fx = sum(c[k] * np.cos(k * np.arccos(x)) for k in range(n))
        direct = fx * hilbert_uniform_measure(x)
        g0 = sum(c[k + 1] * w[k] for k in range(n - 1))
        acc = np.full_like(x, g0)
        for j in range(1, n - 1):
            gj = sum(c[k + 1] * w[k - j] for k in range(j, n - 1))
            acc = acc + 2.0 * gj * np.cos(j * np.arccos(x))
        direct = direct + acc / math.pi
        np.testing.assert_allclose(fast, direct, atol=1e-12)

    def test_route_equivalence_degree256(self, rng):
        n = 256
        c = rng.standard_normal(n) * np.exp(-np.arange(n) / 40.0)
        cv = CoeffVector(Basis("chebyshev"), c)
        pts = rng.uniform(-0.97, 0.97, 40)
        toe = hasegawa_torii(cv, uniform_chebU_moments(n - 1), pts)
        V = classical_connection(jacobi(-0.5, -0.5), jacobi(0, 0), n)
        leg = convert(chebyshev_to_jacobi(cv), V)
        V1 = solve_associated(jacobi(0, 0), 1, n - 1)
        assoc = hilbert_legendre(leg, V1, pts)
        assert np.abs(toe - assoc).max() <= 1e-8


class TestElliottKernel:
    def test_small_orders(self):
        assert elliott_kernel_check(0, 0.3, -0.7) <= 1e-15
        assert elliott_kernel_check(1, 0.3, -0.7) <= 1e-15

    def test_random_orders(self, rng):
        worst = max(
            elliott_kernel_check(k, rng.uniform(-1, 1), rng.uniform(-1, 1))
            for k in range(11)
            for _ in range(4)
        )
        assert worst <= 1e-12

    def test_coincident_arguments_derivative_limit(self):
        assert elliott_kernel_check(4, 0.37, 0.37) <= 1e-12


class TestPVOracle:
    def test_against_closed_form_sin(self):
        from oracle_utils import hilbert_of_sin

        for x in (0.37, -0.81, 0.03):
            val = pv_hilbert_oracle(lambda t: math.sin(5.0 * t), x, 1e-11)
            assert abs(val - hilbert_of_sin(5.0, x)) <= 1e-9

    def test_edge_rejected(self):
        with pytest.raises(DomainError):
            pv_hilbert_oracle(lambda t: t, 1.0 - 1e-12)
