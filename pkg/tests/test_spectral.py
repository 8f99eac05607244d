import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from stoburgers.spectral import (BasisSpec, apply_frac_laplacian, apply_shifted_heat,
                                 bilinear_flux, burgers_nonlinearity, eigenvalue, eval_basis,
                                 hs_norm, l2_norm, lp_norm, min_quadrature_points, norm, project,
                                 to_grid, to_spectral, unit_mode)

# subnormals carry too few bits for relative tolerances
fields = st.integers(1, 40).flatmap(
    lambda n: arrays(np.float64, n, elements=st.floats(-10, 10, allow_nan=False,
                                                       allow_subnormal=False)))


def quad_flux(x, k):
    """<1/2 d/dxi (x^2), e_k> by adaptive quadrature on the analytic derivative."""
    n = len(x)
    ks = np.arange(1, n + 1)

    def u(s):
        return math.sqrt(2) * np.dot(x, np.sin(ks * np.pi * s))

    def du(s):
        return math.sqrt(2) * np.dot(x, ks * np.pi * np.cos(ks * np.pi * s))

    val, _ = integrate.quad(lambda s: u(s) * du(s) * eval_basis(k, s), 0, 1, limit=200)
    return val


class TestEigenAndBasis:
    def test_eigenvalues(self):
        assert eigenvalue(1) == pytest.approx(9.8696044, rel=1e-8)
        assert eigenvalue(2) == pytest.approx(4 * math.pi**2, rel=1e-14)
        assert eigenvalue(10) == pytest.approx(100 * math.pi**2, rel=1e-14)

    @pytest.mark.parametrize("k", [0, -1, 1.5])
    def test_bad_mode(self, k):
        with pytest.raises(ValueError):
            eigenvalue(k)

    def test_eval_basis(self):
        assert eval_basis(1, 0.5) == pytest.approx(math.sqrt(2), rel=1e-14)
        assert eval_basis(2, 0.5) == pytest.approx(0.0, abs=1e-15)
        assert eval_basis(3, 1 / 6) == pytest.approx(math.sqrt(2), rel=1e-14)
        assert eval_basis(7, 0.0) == 0.0
        assert eval_basis(7, 1.0) == 0.0
        with pytest.raises(ValueError):
            eval_basis(1, 1.2)


class TestBasisSpec:
    def test_dealias_default(self):
        assert BasisSpec(8).m_quad == 13
        assert BasisSpec(1).m_quad == min_quadrature_points(1) == 3

    def test_rejects_small_grid(self):
        with pytest.raises(ValueError):
            BasisSpec(8, 12)

    def test_nodes(self):
        b = BasisSpec(4, 9)
        assert np.allclose(b.nodes, np.arange(1, 10) / 10)


class TestTransforms:
    def test_unit_mode_grid(self):
        b = BasisSpec(5)
        g = to_grid(unit_mode(1, 5), b)
        assert np.allclose(g, math.sqrt(2) * np.sin(np.pi * b.nodes), atol=1e-14)
        assert np.allclose(to_spectral(g, b), unit_mode(1, 5), atol=1e-14)

    def test_zero(self):
        b = BasisSpec(6)
        assert np.all(to_grid(np.zeros(6), b) == 0)
        assert np.all(to_spectral(np.zeros(b.m_quad), b) == 0)

    def test_round_trip_random(self):
        b = BasisSpec(8, 16)
        x = np.random.default_rng(1).standard_normal((50, 8))
        assert np.max(np.abs(to_spectral(to_grid(x, b), b) - x)) <= 1e-10

    def test_matches_matrix_synthesis(self):
        b = BasisSpec(7)
        x = np.random.default_rng(2).standard_normal(7)
        assert np.allclose(to_grid(x, b), x @ b.synthesis_matrix, atol=1e-13)

    def test_length_mismatch(self):
        b = BasisSpec(4)
        with pytest.raises(ValueError):
            to_grid(np.zeros(5), b)
        with pytest.raises(ValueError):
            to_spectral(np.zeros(4), b)


class TestSemigroups:
    def test_heat_examples(self):
        e1 = unit_mode(1, 3)
        assert apply_shifted_heat(e1, 0.1)[0] == pytest.approx(math.exp(-0.1 * math.pi**2), rel=1e-14)
        assert apply_shifted_heat(e1, 0.1)[0] == pytest.approx(0.372708, abs=1e-6)
        assert apply_shifted_heat(e1, 0.1, 10.0)[0] == pytest.approx(math.exp(-0.1 * (math.pi**2 + 10)), rel=1e-14)
        assert apply_shifted_heat(e1, 0.1, 10.0)[0] == pytest.approx(0.137112, abs=1e-6)
        x = np.arange(1.0, 4.0)
        assert np.array_equal(apply_shifted_heat(x, 0.0), x)
        with pytest.raises(ValueError):
            apply_shifted_heat(x, -1.0)

    @settings(max_examples=60, deadline=None)
    @given(fields, st.floats(0, 0.3), st.floats(0, 0.3), st.floats(0, 50))
    def test_semigroup_law(self, x, t, s, a):
        lhs = apply_shifted_heat(apply_shifted_heat(x, t, a), s, a)
        rhs = apply_shifted_heat(x, t + s, a)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-300)

    def test_frac_examples(self):
        assert apply_frac_laplacian(unit_mode(1, 2), 0.5)[0] == pytest.approx(math.pi, rel=1e-14)
        assert apply_frac_laplacian(unit_mode(2, 2), 0.2)[1] == pytest.approx((4 * math.pi**2) ** 0.2)
        assert apply_frac_laplacian(unit_mode(2, 2), 0.2)[1] == pytest.approx(2.0858, abs=1e-4)
        x = np.arange(1.0, 5.0)
        assert np.array_equal(apply_frac_laplacian(x, 0.0), x)

    @settings(max_examples=60, deadline=None)
    @given(fields, st.floats(-1, 1), st.floats(-1, 1))
    def test_frac_composition(self, x, a, b):
        lhs = apply_frac_laplacian(apply_frac_laplacian(x, a), b)
        assert np.allclose(lhs, apply_frac_laplacian(x, a + b), rtol=1e-12, atol=0)


class TestNonlinearity:
    def test_unit_mode_closed_form(self):
        b = BasisSpec(6)
        out = burgers_nonlinearity(unit_mode(1, 6), b)
        expected = np.zeros(6)
        expected[1] = math.pi / math.sqrt(2)
        assert np.allclose(out, expected, atol=1e-13)
        assert out[1] == pytest.approx(2.221441, abs=1e-6)

    def test_zero(self):
        b = BasisSpec(5)
        assert np.all(burgers_nonlinearity(np.zeros(5), b) == 0)

    def test_against_quadrature(self):
        b = BasisSpec(5)
        x = np.array([0.7, -0.3, 0.5, 0.1, -0.4])
        expected = np.array([quad_flux(x, k) for k in range(1, 6)])
        assert np.allclose(burgers_nonlinearity(x, b), expected, atol=1e-9)

    def test_matrix_route_agrees(self):
        b = BasisSpec(16)
        x = np.random.default_rng(3).standard_normal((10, 16))
        via_matrix = (x @ b.synthesis_matrix) ** 2 @ b.flux_matrix
        assert np.allclose(via_matrix, burgers_nonlinearity(x, b), atol=1e-12)

    def test_bilinear_symmetric_polarization(self):
        b = BasisSpec(9)
        rng = np.random.default_rng(4)
        x, y = rng.standard_normal((2, 9))
        pol = 0.25 * (burgers_nonlinearity(x + y, b) - burgers_nonlinearity(x - y, b))
        assert np.allclose(bilinear_flux(x, y, b), pol, atol=1e-12)

    @pytest.mark.parametrize("n", [8, 16, 32, 64])
    def test_skew_identity(self, n):
        b = BasisSpec(n)
        x = np.random.default_rng(n).standard_normal((100, n))
        val = np.abs(np.sum(burgers_nonlinearity(x, b) * x, axis=-1))
        assert np.all(val <= 1e-10 * l2_norm(x) ** 3)

    def test_skew_needs_dealiasing(self):
        # with too few nodes the identity breaks; the basis refuses such grids
        n = 16
        x = np.random.default_rng(0).standard_normal(n)
        b = BasisSpec.__new__(BasisSpec)
        object.__setattr__(b, "n", n)
        object.__setattr__(b, "m_quad", n)
        assert abs(np.dot(burgers_nonlinearity(x, b), x)) > 1e-8


class TestNorms:
    def test_unit_mode_norms(self):
        b = BasisSpec(4)
        e1 = unit_mode(1, 4)
        assert norm(e1, "L2") == pytest.approx(1.0)
        assert norm(e1, "H1") == pytest.approx(math.pi)
        assert norm(e1, "L4", basis=b) == pytest.approx(1.5**0.25, rel=1e-12)
        assert norm(e1, "L4", basis=b) == pytest.approx(1.10668, abs=1e-5)

    def test_lp_against_quadrature(self):
        b = BasisSpec(6)
        x = np.array([0.4, 0.0, -0.7, 0.2, 0.0, 0.3])
        ks = np.arange(1, 7)
        f = lambda s: abs(math.sqrt(2) * np.dot(x, np.sin(ks * np.pi * s))) ** 4  # noqa: E731
        exact = integrate.quad(f, 0, 1, limit=200)[0] ** 0.25
        assert lp_norm(x, 4, b) == pytest.approx(exact, rel=1e-10)

    def test_p_below_one(self):
        with pytest.raises(ValueError):
            norm(np.ones(3), "L", 0.5, BasisSpec(3))

    @settings(max_examples=80, deadline=None)
    @given(fields)
    def test_parseval(self, x):
        assert norm(x, "L2") ** 2 == pytest.approx(np.sum(x**2), rel=1e-12, abs=1e-300)
        b = BasisSpec(len(x))
        assert lp_norm(x, 2, b) ** 2 == pytest.approx(np.sum(x**2), rel=1e-10, abs=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(fields)
    def test_poincare(self, x):
        assert hs_norm(x, 1.0) >= math.pi * l2_norm(x) * (1 - 1e-14)

    def test_poincare_equality_only_mode_one(self):
        assert hs_norm(unit_mode(1, 5) * 3, 1.0) == pytest.approx(3 * math.pi, rel=1e-14)
        assert hs_norm(unit_mode(2, 5), 1.0) > math.pi * 1.5


class TestProject:
    def test_examples(self):
        x = unit_mode(1, 6) + unit_mode(5, 6)
        assert np.array_equal(project(x, 3), unit_mode(1, 6))
        y = np.arange(1.0, 7.0)
        assert np.array_equal(project(y, 6), y)
        with pytest.raises(ValueError):
            project(y, 7)

    @settings(max_examples=50, deadline=None)
    @given(fields)
    def test_idempotent_contractive(self, x):
        m = len(x) // 2
        p = project(x, m)
        assert np.array_equal(project(p, m), p)
        assert l2_norm(p) <= l2_norm(x)
