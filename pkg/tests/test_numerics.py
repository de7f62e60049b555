"""Special-function and quadrature primitives against independent oracles.

Reference values were precomputed with mpmath at 50 digits (noted inline) and
are cross-checked here against scipy where a second independent
implementation is available.
"""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import chi2 as scipy_chi2

from s2ewma.numerics import (
    QuadratureRule,
    chebyshev_T_shifted,
    chebyshev_nodes,
    chi2_cdf,
    chi2_pdf,
    chi2_quantile,
    chi2_sf,
    gauss_legendre,
)


class TestChi2Pdf:
    def test_df2_at_zero(self):
        # pdf = exp(-x/2)/2 at x=0
        assert chi2_pdf(0.0, 2.0) == pytest.approx(0.5, abs=1e-15)

    def test_df4_at_zero(self):
        assert chi2_pdf(0.0, 4.0) == 0.0

    def test_gamma_kernel_value(self):
        # mpmath 50 dps: x^(a-1) e^(-x/2) / (2^a Gamma(a)) at x=4, df=4 equals e^-2
        assert chi2_pdf(4.0, 4.0) == pytest.approx(0.13533528323661269189, abs=1e-12)

    def test_odd_df_value(self):
        # mpmath 50 dps
        assert chi2_pdf(7.0, 5.0) == pytest.approx(0.074371267720122831669, rel=1e-13)

    def test_negative_x_is_zero(self):
        assert chi2_pdf(-1.0, 3.0) == 0.0

    def test_bad_df_raises(self):
        with pytest.raises(ValueError):
            chi2_pdf(1.0, 0.0)
        with pytest.raises(ValueError):
            chi2_pdf(1.0, -2.0)


class TestChi2Cdf:
    def test_at_zero(self):
        assert chi2_cdf(0.0, 7.0) == 0.0

    def test_at_infinity(self):
        assert chi2_cdf(1e9, 7.0) == pytest.approx(1.0, abs=1e-14)

    def test_median_df4(self):
        # median located independently below; mpmath gives 3.3566939800333213068
        assert chi2_cdf(3.3566939800333213068, 4.0) == pytest.approx(0.5, abs=1e-12)

    def test_median_by_simpson_bisection(self):
        # independent oracle: adaptive Simpson integration of the density,
        # bisection on the integral to locate the median
        def cdf_simpson(x):
            val, _ = integrate.quad(lambda t: chi2_pdf(t, 4.0), 0.0, x, epsabs=1e-13)
            return val

        lo, hi = 2.0, 5.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if cdf_simpson(mid) < 0.5:
                lo = mid
            else:
                hi = mid
        med = 0.5 * (lo + hi)
        assert chi2_cdf(med, 4.0) == pytest.approx(0.5, abs=1e-10)

    def test_fractional_df(self):
        # mpmath 50 dps
        assert chi2_cdf(3.9, 2.5) == pytest.approx(0.79607816554330081768, rel=1e-13)

    def test_is_antiderivative_of_pdf(self):
        rng = np.random.default_rng(7)
        for _ in range(12):
            df = float(rng.uniform(1.2, 40.0))
            x = float(rng.uniform(0.1, 3.0 * df))
            val, _ = integrate.quad(lambda t: chi2_pdf(t, df), 0.0, x,
                                    epsabs=1e-13, limit=200)
            assert chi2_cdf(x, df) == pytest.approx(val, abs=1e-10)

    def test_sf_complements_cdf(self):
        for x, df in [(0.5, 4.0), (10.0, 4.0), (123.0, 200.0), (300.0, 200.0)]:
            assert chi2_cdf(x, df) + chi2_sf(x, df) == pytest.approx(1.0, abs=1e-13)

    def test_monotone_in_x(self):
        xs = np.linspace(0.0, 30.0, 200)
        vals = [chi2_cdf(float(c), 4.0) for c in xs]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestChi2Quantile:
    def test_truncation_point_for_200_df(self):
        assert round(chi2_quantile(1.0 - 1e-10, 200.0) / 200.0, 3) == 1.773

    def test_exponential_median(self):
        assert chi2_quantile(0.5, 2.0) == pytest.approx(2.0 * math.log(2.0), rel=1e-12)

    def test_round_trip_95(self):
        x = chi2_quantile(0.95, 4.0)
        assert chi2_cdf(x, 4.0) == pytest.approx(0.95, abs=1e-10)

    def test_round_trip_grid(self):
        for df in (1.0, 3.0, 4.0, 17.0, 200.0, 1e6):
            for p in (1e-10, 1e-4, 0.25, 0.5, 0.75, 1.0 - 1e-4, 1.0 - 1e-10):
                x = chi2_quantile(p, df)
                assert chi2_cdf(x, df) == pytest.approx(p, abs=1e-8)

    def test_identity_on_cdf_grid(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            df = float(rng.uniform(1.0, 60.0))
            x = float(rng.uniform(0.05, 2.5 * df))
            p = chi2_cdf(x, df)
            assert chi2_quantile(p, df) == pytest.approx(x, rel=1e-8)

    def test_matches_scipy(self):
        for df in (4.0, 40.0, 200.0):
            for p in (0.01, 0.25, 0.9, 1.0 - 1e-10):
                assert chi2_quantile(p, df) == pytest.approx(
                    scipy_chi2.ppf(p, df), rel=1e-9)

    def test_domain_errors(self):
        for p in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                chi2_quantile(p, 4.0)


class TestGaussLegendre:
    def test_single_node(self):
        rule = gauss_legendre(1, -1.0, 1.0)
        assert rule.nodes[0] == pytest.approx(0.0, abs=1e-15)
        assert rule.weights[0] == pytest.approx(2.0, abs=1e-15)

    def test_polynomial_exactness(self):
        rule = gauss_legendre(60, 0.0, 1.0)
        for k in (0, 1, 5, 60, 119):
            exact = 1.0 / (k + 1)
            approx = float(np.sum(rule.weights * rule.nodes ** k))
            assert approx == pytest.approx(exact, rel=1e-13)

    def test_x5_exact(self):
        rule = gauss_legendre(60, 0.0, 1.0)
        assert float(np.sum(rule.weights * rule.nodes ** 5)) == pytest.approx(1.0 / 6.0, abs=1e-14)

    def test_rule_invariants(self):
        rule = gauss_legendre(60, 0.0, 1.773)
        assert isinstance(rule, QuadratureRule)
        assert np.all(np.diff(rule.nodes) > 0)
        assert rule.nodes[0] > rule.a and rule.nodes[-1] < rule.b
        assert np.all(rule.weights > 0)
        assert float(np.sum(rule.weights)) == pytest.approx(rule.b - rule.a, rel=1e-12)

    def test_scaled_chi2_density_mass(self):
        # integral of the phase-I estimator density up to its 1-1e-10 quantile
        K = 200.0
        cut = chi2_quantile(1.0 - 1e-10, K) / K
        rule = gauss_legendre(60, 0.0, cut)
        mass = float(np.sum(rule.weights * np.array(
            [K * chi2_pdf(K * s, K) for s in rule.nodes])))
        assert mass == pytest.approx(chi2_cdf(K * cut, K), abs=1e-9)

    def test_matches_numpy_leggauss(self):
        x, w = np.polynomial.legendre.leggauss(60)
        rule = gauss_legendre(60, -1.0, 1.0)
        assert np.allclose(rule.nodes, x, atol=1e-14)
        assert np.allclose(rule.weights, w, atol=1e-14)

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            gauss_legendre(10, 1.0, 1.0)


class TestChebyshev:
    def test_T0_is_one(self):
        for z in (0.0, 0.3, 2.0):
            assert chebyshev_T_shifted(1, z, 0.0, 2.0) == pytest.approx(1.0, abs=1e-15)

    def test_T1_at_upper_end(self):
        assert chebyshev_T_shifted(2, 2.0, 0.0, 2.0) == pytest.approx(1.0, abs=1e-15)

    def test_T4_at_midpoint(self):
        assert chebyshev_T_shifted(5, 1.0, 0.0, 2.0) == pytest.approx(1.0, abs=1e-12)

    def test_three_term_recurrence(self):
        lo, hi = 0.0, 1.6453
        zs = np.linspace(lo, hi, 17)
        for z in zs:
            xi = (2.0 * z - (hi + lo)) / (hi - lo)
            for s in range(2, 12):
                lhs = chebyshev_T_shifted(s + 1, z, lo, hi)
                rhs = 2.0 * xi * chebyshev_T_shifted(s, z, lo, hi) - chebyshev_T_shifted(s - 1, z, lo, hi)
                assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_outside_domain_raises(self):
        with pytest.raises(ValueError):
            chebyshev_T_shifted(3, 2.5, 0.0, 2.0)

    def test_single_node(self):
        assert chebyshev_nodes(1, 0.0, 2.0)[0] == pytest.approx(1.0, abs=1e-15)

    def test_two_nodes(self):
        nodes = chebyshev_nodes(2, -1.0, 1.0)
        assert sorted(nodes) == pytest.approx([-math.sqrt(2) / 2, math.sqrt(2) / 2], abs=1e-15)

    def test_interior_and_symmetric(self):
        lo, hi = 0.0, 1.6453
        nodes = chebyshev_nodes(50, lo, hi)
        assert len(set(nodes.tolist())) == 50
        assert np.all(nodes > lo) and np.all(nodes < hi)
        mirrored = (hi + lo) - nodes[::-1]
        assert np.allclose(nodes, mirrored, atol=1e-12)
