"""Conditional run-length machinery: collocation solver, Markov comparator,
closed forms and published reference values.

Geometric closed forms (lam=1 reduces the chart to independent subgroup
variances) provide exact oracles; the remaining anchors are the published
design values for the n=5 charts.
"""

import math

import numpy as np
import pytest

from s2ewma.conditional import (
    ChartConfig,
    Limits,
    arl_conditional,
    rl_quantile_conditional,
    sf_conditional,
    sf_markov_chain,
    transition_density,
)
from s2ewma.numerics import chi2_cdf
from s2ewma.unconditional import PhaseIConfig, sf_unconditional

UP01 = ChartConfig(lam=0.1, n=5)
TWO01 = ChartConfig(lam=0.1, n=5, sided="two")
SHEW = ChartConfig(lam=1.0, n=5)


class TestTypes:
    def test_chart_config_validation(self):
        with pytest.raises(ValueError):
            ChartConfig(lam=0.0, n=5)
        with pytest.raises(ValueError):
            ChartConfig(lam=1.2, n=5)
        with pytest.raises(ValueError):
            ChartConfig(lam=0.1, n=1)
        with pytest.raises(ValueError):
            ChartConfig(lam=0.1, n=5, sided="both")
        with pytest.raises(ValueError):
            ChartConfig(lam=0.1, n=5, z0=0.0)

    def test_limits_validation(self):
        with pytest.raises(ValueError):
            Limits(cu=-1.0)
        with pytest.raises(ValueError):
            Limits(cu=1.0, cl=1.5)
        lim = Limits(cu=1.5, cl=0.5)
        assert lim.lower == 0.5
        assert Limits(cu=1.5).lower == 0.0

    def test_shewhart_reduction_flagged(self):
        # lam = 1 is legal and means the plain subgroup-variance chart
        assert ChartConfig(lam=1.0, n=5).lam == 1.0


class TestTransitionDensity:
    def test_zero_below_support_edge(self):
        assert transition_density(1.0, 0.89, UP01, 1.0) == 0.0
        assert transition_density(1.0, 0.9 - 1e-12, UP01, 1.0) == 0.0

    def test_integrates_to_one(self):
        from scipy import integrate
        val, _ = integrate.quad(lambda z: transition_density(1.0, z, UP01, 1.0),
                                0.9, 0.9 + 2.0, limit=200)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_bad_sigma2(self):
        with pytest.raises(ValueError):
            transition_density(1.0, 1.0, UP01, 0.0)

    def test_matches_simulated_one_step_cdf_differences(self):
        # Monte Carlo finite difference of the one-step CDF of the statistic
        rng = np.random.default_rng(202)
        lam, df, z0, v = 0.1, 4, 1.0, 1.0
        draws = (1.0 - lam) * z0 + lam * v * rng.chisquare(df, size=10_000_000) / df
        z, h = 1.0, 0.004
        est = np.count_nonzero((draws > z - h) & (draws <= z + h)) / len(draws) / (2 * h)
        assert transition_density(z0, z, UP01, v) == pytest.approx(est, abs=1e-2 * 3)


class TestGeometricReduction:
    def test_survival_is_geometric(self):
        cu = 5.3026
        hit = chi2_cdf(4.0 * cu, 4)
        curve = sf_conditional(SHEW, 1.0, Limits(cu=cu), 100, N=12)
        for l in (1, 2, 10, 50, 100):
            assert curve.sf_at(l) == pytest.approx(hit ** l, abs=1e-10)

    def test_geometric_for_any_basis_size(self):
        cu = 4.0
        hit = chi2_cdf(4.0 * cu / 1.44, 4)
        for N in (10, 25, 50):
            curve = sf_conditional(SHEW, 1.44, Limits(cu=cu), 60, N=N)
            err = max(abs(curve.sf_at(l) - hit ** l) for l in range(1, 61))
            assert err < 1e-10

    def test_shewhart_arl_closed_form(self):
        arl = arl_conditional(SHEW, 1.0, Limits(cu=5.3026))
        assert arl == pytest.approx(1.0 / (1.0 - chi2_cdf(4 * 5.3026, 4)), rel=1e-9)
        assert arl == pytest.approx(3476.4, abs=1.0)

    def test_shewhart_quantile_formula(self):
        arl = arl_conditional(SHEW, 1.0, Limits(cu=5.3026))
        for alpha in (0.1, 0.5, 0.9):
            expected = math.ceil(math.log(1 - alpha) / math.log(1 - 1 / arl))
            assert rl_quantile_conditional(SHEW, 1.0, Limits(cu=5.3026), alpha) == expected


class TestFirstStepClosedForm:
    def test_upper_first_value(self):
        cu = 1.6453
        curve = sf_conditional(UP01, 1.0, Limits(cu=cu), 5)
        expected = chi2_cdf((4.0 / 1.0) * (cu - 0.9) / 0.1, 4)
        assert curve.sf[0] == pytest.approx(expected, abs=1e-12)

    def test_two_sided_first_value(self):
        lims = Limits(cu=1.5496, cl=0.6259)
        curve = sf_conditional(TWO01, 1.0, lims, 5)
        hi = chi2_cdf(4.0 * (1.5496 - 0.9) / 0.1, 4)
        lo = chi2_cdf(4.0 * (0.6259 - 0.9) / 0.1, 4)  # negative arg -> 0
        assert lo == 0.0
        assert curve.sf[0] == pytest.approx(hi, abs=1e-12)


class TestPublishedAnchors:
    def test_upper_arl_500(self):
        assert arl_conditional(UP01, 1.0, Limits(cu=1.4781)) == pytest.approx(500.0, abs=0.5)

    def test_two_sided_arl_500(self):
        assert arl_conditional(TWO01, 1.0, Limits(cu=1.5496, cl=0.6259)) == \
            pytest.approx(500.0, abs=0.5)

    def test_median_run_lengths(self):
        assert rl_quantile_conditional(UP01, 1.0, Limits(cu=1.4781), 0.5) == 348
        assert rl_quantile_conditional(TWO01, 1.0, Limits(cu=1.5496, cl=0.6259), 0.5) == 349

    def test_upper_benchmark_cdf_point(self):
        curve = sf_conditional(UP01, 1.0, Limits(cu=1.6453), 1000)
        assert 1.0 - curve.sf_at(1000) == pytest.approx(0.25, abs=1e-3)

    def test_ooc_arls(self):
        assert arl_conditional(UP01, 2.25, Limits(cu=1.6453)) == pytest.approx(8.05, abs=0.02)
        cfg = ChartConfig(lam=0.05, n=5, sided="two")
        assert arl_conditional(cfg, 0.25, Limits(cu=1.4377, cl=0.6825)) == \
            pytest.approx(11.3, abs=0.05)


class TestCurveProperties:
    def test_sf_monotone_and_bounded(self):
        for cfg, lims, s2 in [
            (UP01, Limits(cu=1.4781), 1.0),
            (UP01, Limits(cu=1.4781), 2.25),
            (TWO01, Limits(cu=1.5496, cl=0.6259), 0.64),
            (SHEW, Limits(cu=5.3026), 1.0),
        ]:
            curve = sf_conditional(cfg, s2, lims, 2000)
            assert np.all(curve.sf <= 1.0) and np.all(curve.sf >= 0.0)
            assert np.all(np.diff(curve.sf) <= 1e-15)

    def test_tail_ratio_consistency(self):
        curve = sf_conditional(UP01, 1.0, Limits(cu=1.4781), 5000)
        t = curve.tail_start
        assert curve.tail_converged
        for l in range(t, min(t + 50, 4999)):
            ratio = curve.sf_at(l + 1) / curve.sf_at(l)
            assert ratio == pytest.approx(curve.tail_ratio, abs=1e-9)

    def test_basis_size_convergence(self):
        a = sf_conditional(UP01, 1.0, Limits(cu=1.6453), 5000, N=40)
        b = sf_conditional(UP01, 1.0, Limits(cu=1.6453), 5000, N=50)
        assert float(np.max(np.abs(a.sf - b.sf))) < 1e-8

    def test_monotone_in_cu(self):
        lo = sf_conditional(UP01, 1.0, Limits(cu=1.55), 300)
        hi = sf_conditional(UP01, 1.0, Limits(cu=1.65), 300)
        assert np.all(hi.sf - lo.sf >= -1e-12)

    def test_instant_absorption_returns_zero_curve(self):
        curve = sf_conditional(UP01, 1.0, Limits(cu=0.85), 50)  # cu < (1-lam)*z0
        assert np.all(curve.sf == 0.0)

    def test_degenerate_beats_solver_probe(self):
        # tiny-but-valid region: curve still well-defined
        curve = sf_conditional(UP01, 1.0, Limits(cu=0.95), 50)
        assert np.all(curve.sf >= 0.0) and curve.sf[0] <= 1.0


class TestMarkovComparator:
    def test_matches_geometric_closed_form(self):
        cu = 5.3026
        hit = chi2_cdf(4.0 * cu, 4)
        curve = sf_markov_chain(SHEW, 1.0, Limits(cu=cu), 50, N_states=300)
        for l in (1, 10, 50):
            assert curve.sf_at(l) == pytest.approx(hit ** l, rel=1e-6)

    def test_converges_to_collocation(self):
        lims = Limits(cu=1.4781)
        ref = sf_conditional(UP01, 1.0, lims, 400).sf_at(400)
        errs = []
        for ns in (100, 200, 400):
            approx = sf_markov_chain(UP01, 1.0, lims, 400, N_states=ns).sf_at(400)
            errs.append(abs(approx - ref))
        assert errs[0] > errs[1] > errs[2]

    def test_two_sided_states(self):
        lims = Limits(cu=1.5496, cl=0.6259)
        ref = sf_conditional(TWO01, 1.0, lims, 200).sf_at(200)
        approx = sf_markov_chain(TWO01, 1.0, lims, 200, N_states=600).sf_at(200)
        assert approx == pytest.approx(ref, rel=5e-3)


class TestMethodComparison:
    def test_collocation_beats_markov_on_mixed_sf(self):
        # unconditional survival at l = 1000 for the published mixed design
        phase1 = PhaseIConfig(m=50, n=5)
        lims = Limits(cu=1.719846)
        c50 = sf_unconditional(1000, UP01, phase1, 1.0, lims, N=50)[-1]
        c40 = sf_unconditional(1000, UP01, phase1, 1.0, lims, N=40)[-1]
        m500 = sf_unconditional(1000, UP01, phase1, 1.0, lims,
                                method="markov", n_states=500)[-1]
        assert abs(c40 - c50) < abs(m500 - c50)
