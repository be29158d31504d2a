import math

import numpy as np
import pytest
from scipy.signal import fftconvolve
from scipy.special import expit

from srdetect import asymptotics as asy
from srdetect import oc
from srdetect.exceptions import ConfigurationError, ResolutionError, UnsupportedModelError
from srdetect.model import POST, sample_observation

PI2_6 = math.pi**2 / 6


def lattice_overshoot_constants(h=0.02, half_width=60.0, terms=300):
    """Deterministic zeta and varkappa for the beta model.

    The log-likelihood ratio has cdf ``expit(z)**2`` under ``g`` and
    ``1 - expit(-z)**2`` under ``f``.  Each law is put on the lattice ``h Z``
    (cell masses from the exact cdf) and the k-step laws come from repeated
    convolution; atoms at zero count half.
    """
    z = np.arange(-int(half_width / h), int(half_width / h) + 1) * h
    edges = np.append(z - h / 2, z[-1] + h / 2)
    p0 = np.diff(expit(edges) ** 2)
    pinf = np.diff(1 - expit(-edges) ** 2)
    zero = np.searchsorted(z, 0.0)
    n = z.size

    def series(p, functional):
        d = np.zeros(n)
        d[zero] = 1.0
        out = []
        for _ in range(terms):
            d = np.clip(fftconvolve(d, p)[n // 2:n // 2 + n], 0, None)
            out.append(functional(d))
        return np.array(out)

    k = np.arange(1, terms + 1)
    below = series(p0, lambda d: d[:zero].sum() + 0.5 * d[zero])
    neg = series(p0, lambda d: (np.maximum(-z, 0) * d).sum())
    above = series(pinf, lambda d: d[zero + 1:].sum() + 0.5 * d[zero])
    return math.exp(-((below + above) / k).sum()), PI2_6 - (neg / k).sum()


def direct_overshoot(model, level, n_paths, rng):
    """Overshoot ``S_tau - level`` of the post-change random walk, by brute force."""
    S = np.zeros(n_paths)
    over = np.full(n_paths, np.nan)
    active = np.arange(n_paths)
    while active.size:
        S[active] += model.log_lr(sample_observation(model, POST, rng, active.size))
        crossed = S[active] > level
        over[active[crossed]] = S[active[crossed]] - level
        active = active[~crossed]
    return over


@pytest.fixture(scope="module")
def lattice():
    return lattice_overshoot_constants()


@pytest.fixture(scope="module")
def overshoot(beta):
    return asy.overshoot_constants(beta, series_cap=10_000, mc_paths=100_000, rng=7)


@pytest.fixture(scope="module")
def laws(beta):
    return asy.stationary_laws(beta)


class TestOvershoot:
    def test_lattice_oracle_converged(self, lattice):
        finer = lattice_overshoot_constants(h=0.01)
        assert abs(finer[0] - lattice[0]) < 1e-4
        assert abs(finer[1] - lattice[1]) < 1e-4

    def test_series_mc_against_lattice(self, overshoot, lattice):
        assert abs(overshoot.zeta - lattice[0]) < 3 * overshoot.zeta_se
        assert abs(overshoot.varkappa - lattice[1]) < 3 * overshoot.varkappa_se

    def test_series_mc_against_direct_overshoot(self, beta, overshoot):
        kappa = direct_overshoot(beta, 40.0, 200_000, np.random.default_rng(3))
        for est, se, sample in (
            (overshoot.varkappa, overshoot.varkappa_se, kappa),
            (overshoot.zeta, overshoot.zeta_se, np.exp(-kappa)),
        ):
            se_direct = sample.std(ddof=1) / math.sqrt(sample.size)
            assert abs(est - sample.mean()) < 4 * math.hypot(se, se_direct)

    def test_ranges_and_bookkeeping(self, overshoot):
        assert 0 < overshoot.zeta < 1
        assert overshoot.varkappa > 0
        assert overshoot.zeta_se > 0 and overshoot.varkappa_se > 0
        assert overshoot.mc_paths == 100_000
        assert 1 <= overshoot.terms_used <= 10_000

    def test_gaussian_zeta_in_unit_interval(self, gauss):
        est = asy.overshoot_constants(gauss, series_cap=2000, mc_paths=10_000, rng=1)
        assert 0 < est.zeta < 1 and est.varkappa > 0

    def test_reproducible(self, beta):
        a = asy.overshoot_constants(beta, series_cap=1000, mc_paths=10_000, rng=5)
        b = asy.overshoot_constants(beta, series_cap=1000, mc_paths=10_000, rng=5)
        assert a == b

    def test_leading_fraction(self, beta):
        value, how = asy._leading_fraction(beta)
        assert value == pytest.approx(PI2_6, rel=1e-8)
        assert how == "quadrature"

    def test_rejects_bad_cap(self, beta):
        with pytest.raises(ConfigurationError):
            asy.overshoot_constants(beta, series_cap=0)


class TestStationaryLaws:
    def test_closed_form(self, laws):
        x = np.linspace(0, laws.x_max / 2, 2001)
        assert np.abs(laws.cdf_st(x) - x / (1 + x)).max() < 1e-3
        assert np.abs(laws.cdf_tilde(x) - x / (1 + x)).max() < 1e-3

    def test_laws_coincide(self, laws):
        x = np.geomspace(1e-3, 500, 400)
        assert np.abs(laws.cdf_st(x) - laws.cdf_tilde(x)).max() < 1e-3

    def test_kesten_tail(self, laws):
        x = np.linspace(10, 50, 41)
        tail = 1 - laws.cdf_st(x)
        assert np.all(np.abs(tail * x - 1) < 0.15)

    def test_normalisation(self, laws):
        assert laws.masses_st.sum() == pytest.approx(1.0, abs=1e-6)
        assert laws.masses_tilde.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.all(laws.q_st >= 0) and np.all(laws.q_tilde >= 0)
        assert laws.eigenvalue_st == pytest.approx(1.0, abs=1e-6)
        assert laws.eigenvalue_tilde == pytest.approx(1.0, abs=1e-6)

    def test_densities_on_window(self, laws):
        x = laws.x
        assert x.max() <= laws.x_max
        np.testing.assert_allclose(laws.q_st, 1 / (1 + x) ** 2, rtol=1e-3, atol=1e-6)

    def test_small_window_rejected(self, beta):
        with pytest.raises(ResolutionError, match="x_max"):
            asy.stationary_laws(beta, x_max=5.0, grid_n=256)

    def test_unsupported(self, expo):
        with pytest.raises(UnsupportedModelError):
            asy.stationary_laws(expo)


class TestConstants:
    def test_closed_forms(self, beta):
        assert asy.constant_c(beta, 0.0) == 1.0
        assert asy.constant_c(beta, asy.INFINITY) == pytest.approx(PI2_6, rel=1e-15)
        assert asy.constant_c(beta, 1.98) == pytest.approx(PI2_6, abs=2e-3)

    @pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 2.0, 5.0])
    def test_quadrature_matches_closed_form(self, beta, laws, r):
        exact = asy.constant_c(beta, r, method="closed_form")
        assert asy.constant_c(beta, r, laws, "quadrature") == pytest.approx(exact, abs=5e-3)

    def test_c_infinity_quadrature(self, beta, laws):
        assert asy.constant_c(beta, asy.INFINITY, laws, "quadrature") == pytest.approx(PI2_6, abs=5e-3)

    def test_no_closed_form_for_gaussian(self, gauss):
        with pytest.raises(UnsupportedModelError):
            asy.constant_c(gauss, 0.0, method="closed_form")

    def test_gaussian_ordering(self, gauss):
        g_laws = asy.stationary_laws(gauss)
        assert asy.constant_c(gauss, 0.0, g_laws) <= asy.constant_c(gauss, asy.INFINITY, g_laws)

    def test_negative_r(self, beta):
        with pytest.raises(ConfigurationError):
            asy.constant_c(beta, -1.0)

    def test_bundle(self, beta, overshoot):
        c = asy.asymptotic_constants(beta, overshoot=overshoot)
        assert c.c_infinity == pytest.approx(PI2_6)
        assert c.c_at(0.0) == 1.0
        assert c.provenance["c_infinity"] == "closed_form"
        assert c.provenance["zeta"] == "series_mc"
        assert c.kl == 1.0


def published_constants(beta):
    over = asy.OvershootConstants(0.426, 0.0, 1.255, 0.0, 0, 0)
    return asy.asymptotic_constants(beta, overshoot=over)


class TestApproximations:
    def test_arl(self):
        assert asy.approx_arl(42.0, 0.426) == pytest.approx(98.59, abs=0.01)
        assert asy.approx_arl(43.0, 0.426, 2.603) == pytest.approx(43 / 0.426 - 2.603)
        assert asy.approx_arl(17.0, 0.5) == 34.0

    def test_sadd_at_threshold(self, beta):
        c = published_constants(beta)
        assert asy.approx_sadd("SRP", c, A=43.0) == pytest.approx(math.log(43) + 1.255 - PI2_6)
        assert asy.approx_sadd("SRP", c, A=43.0) == pytest.approx(3.371, abs=1e-3)

    def test_sadd_at_gamma(self, beta):
        c = published_constants(beta)
        assert asy.approx_sadd("SR", c, gamma=100) == pytest.approx(4.005, rel=5e-3)
        assert asy.approx_sadd("SRP", c, gamma=1e4) == pytest.approx(7.966, rel=5e-3)

    def test_second_order_gap(self, beta):
        c = published_constants(beta)
        gap = asy.approx_sadd("SR", c, A=100.0) - asy.approx_sadd("SR_r", c, A=100.0)
        assert gap == pytest.approx(1 - PI2_6 + 2 * (PI2_6 - 1), abs=1e-12)
        assert gap == pytest.approx(0.645, abs=1e-3)

    def test_bad_arguments(self, beta):
        c = published_constants(beta)
        with pytest.raises(ConfigurationError):
            asy.approx_sadd("SR", c)
        with pytest.raises(ConfigurationError):
            asy.approx_sadd("CUSUM", c, A=10.0)

    @pytest.mark.parametrize("source", ["lattice", "published"])
    def test_srp_approximation_converges(self, beta, lattice, source):
        zeta, varkappa = lattice if source == "lattice" else (0.426, 1.255)
        c = asy.asymptotic_constants(beta, overshoot=asy.OvershootConstants(zeta, 0.0, varkappa, 0.0, 0, 0))
        errs = []
        for gamma in (50, 100, 500, 1000, 10_000):
            A = oc.calibrate_threshold(beta, oc.Procedure.srp(), gamma)
            errs.append(abs(oc.srp_characteristics(beta, A).sadd - asy.approx_sadd("SRP", c, gamma=gamma)))
        assert all(a > b for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 0.01

    def test_arl_approximation(self, beta, overshoot):
        for gamma in (50, 100, 1000):
            A = oc.calibrate_threshold(beta, oc.Procedure.sr(), gamma)
            assert abs(asy.approx_arl(A, overshoot.zeta) - gamma) / gamma < 0.03


class TestDesign:
    def test_equalizer_root(self, beta):
        r = asy.design_head_start("equalizer", beta)
        assert r == pytest.approx(1.98, abs=1e-2)
        assert (1 + r) / r * math.log1p(r) == pytest.approx(PI2_6, abs=1e-9)

    def test_equalizer_closed_vs_quadrature(self, beta, laws):
        a = asy.design_head_start("equalizer", beta, method="closed_form")
        b = asy.design_head_start("equalizer", beta, laws=laws, method="quadrature")
        assert abs(a - b) < 5e-3

    def test_quasi_mean(self, beta):
        assert asy.design_head_start("quasi_mean", beta, 43.0) == pytest.approx(2.603, abs=5e-3)

    def test_quasi_mean_needs_threshold(self, beta):
        with pytest.raises(ConfigurationError):
            asy.design_head_start("quasi_mean", beta)

    def test_unknown_mode(self, beta):
        with pytest.raises(ConfigurationError):
            asy.design_head_start("median", beta)

    def test_head_start_is_small_relative_to_threshold(self, beta):
        ratios = [oc.quasi_stationary(beta, A).mean / A for A in (1e2, 1e3, 1e4)]
        assert ratios[0] > ratios[1] > ratios[2]
