import numpy as np
import pytest

from srdetect.exceptions import ConfigurationError, NumericalError, UnsupportedModelError
from srdetect.model import POST, PRE
from srdetect.numerics import (
    MIN_NODES,
    build_grid,
    discretize_kernel,
    gauss_legendre_panels,
    leading_eigenpair,
    solve_fredholm,
    spectral_radius_estimate,
    transition_density,
)


def qsd_mean(pair, grid):
    return float(pair.masses @ grid.nodes)


class TestGrid:
    def test_polynomial_exactness(self):
        g = build_grid(1.0, 64)
        assert g.integrate(g.nodes) == pytest.approx(0.5, abs=1e-12)

    def test_weights_sum(self):
        g = build_grid(43.0, 2048)
        assert g.weights.sum() == pytest.approx(43.0, rel=1e-9)

    def test_rational_integrand(self):
        g = build_grid(43.0, 2048)
        assert g.integrate(1 / (1 + g.nodes) ** 2) == pytest.approx(43 / 44, abs=1e-10)

    def test_invariants(self):
        g = build_grid(4259.0, 2048)
        assert g.size >= MIN_NODES
        assert np.all(np.diff(g.nodes) > 0)
        assert np.all(g.weights > 0)
        assert 0 < g.nodes[0] and g.nodes[-1] < g.upper

    def test_deterministic(self):
        a, b = build_grid(43.0, 256), build_grid(43.0, 256)
        assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.weights, b.weights)

    @pytest.mark.parametrize("A,n", [(43.0, 63), (0.0, 128), (-1.0, 128), (np.inf, 128)])
    def test_rejects(self, A, n):
        with pytest.raises(ConfigurationError):
            build_grid(A, n)

    def test_single_panel_rule(self):
        nodes, weights = gauss_legendre_panels(np.array([0.0, 2.0]), 8)
        assert weights @ nodes**15 == pytest.approx(2.0**16 / 16, rel=1e-13)


@pytest.fixture(scope="module")
def pre43(beta):
    return discretize_kernel(beta, PRE, build_grid(43.0, 2048))


class TestKernel:
    def test_row_sum_at_zero(self, pre43):
        assert pre43.row(0.0).sum() == pytest.approx(1 - 44.0**-2, abs=1e-8)

    def test_row_sum_near_threshold(self, pre43):
        assert pre43.row(42.0).sum() == pytest.approx(0.75, abs=1e-8)

    def test_row_sum_identity_every_row(self, beta, pre43):
        y = pre43.grid.nodes
        np.testing.assert_allclose(pre43.matrix.sum(axis=1), beta.cdf_lr_pre(43.0 / (1 + y)), atol=1e-8)

    def test_row_sum_identity_large_threshold(self, beta):
        op = discretize_kernel(beta, PRE, build_grid(4259.0, 2048))
        y = op.grid.nodes
        np.testing.assert_allclose(op.matrix.sum(axis=1), beta.cdf_lr_pre(4259.0 / (1 + y)), atol=1e-8)

    @pytest.mark.parametrize("name", ["beta", "gaussian"])
    @pytest.mark.parametrize("regime", [PRE, POST])
    def test_nonnegative_and_substochastic(self, name, regime):
        from srdetect.model import get_model

        op = discretize_kernel(get_model(name), regime, build_grid(43.0, 512))
        assert np.all(op.matrix >= 0)
        if regime == PRE:
            assert op.matrix.sum(axis=1).max() <= 1 + 1e-6

    def test_orientation(self, beta, pre43):
        g = pre43.grid
        j, i = 100, 700
        expected = g.weights[i] * beta.pdf_lr_pre(g.nodes[i] / (1 + g.nodes[j])) / (1 + g.nodes[j])
        assert pre43.matrix[j, i] == pytest.approx(expected, rel=1e-14)
        u = np.sin(g.nodes)
        assert pre43.apply(u)[j] == pytest.approx(pre43.matrix[j] @ u, rel=1e-14)

    def test_row_matches_matrix_on_grid(self, pre43):
        j = 321
        np.testing.assert_allclose(pre43.row(pre43.grid.nodes[j]), pre43.matrix[j], rtol=1e-14)

    def test_unsupported_kernel(self, expo):
        with pytest.raises(UnsupportedModelError):
            discretize_kernel(expo, PRE, build_grid(10.0, 64))
        with pytest.raises(UnsupportedModelError):
            transition_density(expo, POST, [1.0], [0.0])


class TestFredholm:
    def test_zero_rhs(self, beta):
        op = discretize_kernel(beta, PRE, build_grid(43.0, 256))
        assert np.array_equal(solve_fredholm(op, 0.0), np.zeros(op.grid.size))

    @pytest.mark.parametrize("A,expected", [(42.0, 99.832), (21.0, 50.412)])
    def test_sr_arl(self, beta, A, expected):
        op = discretize_kernel(beta, PRE, build_grid(A, 2048))
        u = solve_fredholm(op, 1.0)
        u0 = 1.0 + op.row(0.0) @ u
        assert u0 == pytest.approx(expected, rel=1e-3)

    def test_residual(self, beta):
        op = discretize_kernel(beta, PRE, build_grid(43.0, 512))
        rhs = np.cos(op.grid.nodes)
        u = solve_fredholm(op, rhs)
        assert np.abs(u - rhs - op.apply(u)).max() < 1e-10 * np.abs(u).max()

    def test_singular_system_reported(self, beta):
        op = discretize_kernel(beta, PRE, build_grid(43.0, 128))
        from dataclasses import replace

        lam = leading_eigenpair(op).eigenvalue
        scaled = replace(op, matrix=op.matrix / lam)
        with pytest.raises(NumericalError, match="spectral radius"):
            solve_fredholm(scaled, 1.0)

    def test_spectral_radius_below_one(self, beta):
        op = discretize_kernel(beta, PRE, build_grid(43.0, 256))
        rho = spectral_radius_estimate(op, 2000)
        assert 0 < rho < 1
        assert rho == pytest.approx(leading_eigenpair(op).eigenvalue, rel=1e-6)


class TestEigenpair:
    @pytest.mark.parametrize("A,mean", [(43.0, 2.603), (4259.0, 6.982)])
    def test_quasi_stationary_mean(self, beta, A, mean):
        g = build_grid(A, 2048)
        pair = leading_eigenpair(discretize_kernel(beta, PRE, g))
        assert qsd_mean(pair, g) == pytest.approx(mean, rel=1e-2)

    @pytest.mark.parametrize("A", [5.0, 43.0, 1000.0])
    def test_eigenvalue_and_positivity(self, beta, A):
        g = build_grid(A, 512)
        pair = leading_eigenpair(discretize_kernel(beta, PRE, g))
        assert 0 < pair.eigenvalue < 1
        assert np.all(pair.density >= 0)
        assert g.integrate(pair.density) == pytest.approx(1.0, abs=1e-12)

    def test_residual(self, beta):
        pair = leading_eigenpair(discretize_kernel(beta, PRE, build_grid(43.0, 2048)))
        assert pair.residual < 1e-8

    def test_non_convergence(self, beta):
        with pytest.raises(NumericalError, match="residual"):
            leading_eigenpair(discretize_kernel(beta, PRE, build_grid(43.0, 128)), tol=0.0, max_iter=5)

    def test_approaches_stationary_law(self, beta):
        g = build_grid(1e4, 2048)
        pair = leading_eigenpair(discretize_kernel(beta, PRE, g))
        x = np.linspace(0, 100, 401)
        cdf = beta.cdf_lr_pre(x[:, None] / (1 + g.nodes[None, :])) @ pair.masses / pair.eigenvalue
        assert np.abs(cdf - x / (1 + x)).max() < 0.01


def test_self_convergence(beta):
    vals = []
    for n in (1024, 2048):
        op = discretize_kernel(beta, PRE, build_grid(43.0, n))
        vals.append(1.0 + op.row(0.0) @ solve_fredholm(op, 1.0))
    assert abs(vals[1] / vals[0] - 1) < 1e-3
