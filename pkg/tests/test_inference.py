import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from stein_bicount.distributions import BHermParams, BivariateSample, BnbParams, BPoiParams, pmf_grid, sample
from stein_bicount.errors import DegenerateSample
from stein_bicount.inference import (
    SummaryStats,
    TestReport,
    chi2_2_sf,
    fit_bpoi_null,
    moments_batch,
    population_stats,
    summarize,
    t1,
    t1_batch,
    t1_dispersion_closed_form,
    t2,
    t3,
    t_star,
    t_star_batch,
    t_star_p_value,
)
from stein_bicount.stein import F05, F1, monomial

counts = st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), min_size=3, max_size=60)


def data1_stats():
    # n, means, dispersion ratios and correlation of the first real-data example
    return SummaryStats.from_moments(100, 0.94, 0.64, 1.415 * 0.94, 1.216 * 0.64, 0.276)


class TestSummaries:
    def test_summarize_matches_numpy(self):
        s = sample(BPoiParams(1, 2, 3), 500, 1)
        st_ = summarize(s)
        assert st_.m1 == pytest.approx(s.x1.mean())
        assert st_.s2sq == pytest.approx(s.x2.var())
        assert st_.r == pytest.approx(np.corrcoef(s.x1, s.x2)[0, 1])
        assert st_.cov == pytest.approx(np.cov(s.x1, s.x2, bias=True)[0, 1])

    def test_constant_coordinate(self):
        with pytest.raises(DegenerateSample, match="zero variance in coordinate 2"):
            summarize(BivariateSample([0, 1, 2], [3, 3, 3]))

    def test_too_small(self):
        with pytest.raises(DegenerateSample):
            summarize(BivariateSample([1], [2]))

    def test_dispersion_ratios(self):
        assert data1_stats().dispersion_ratios == pytest.approx((1.415, 1.216))

    def test_population_stats(self):
        p = BnbParams(5, 0.2, 0.2, 0.05)
        ps = population_stats(pmf_grid(p, tol=1e-14))
        assert ps.n is None
        assert (ps.m1, ps.s1sq, ps.cov) == pytest.approx((p.means[0], p.variances[0], p.cov), rel=1e-10)

    def test_weighted_moments_equal_expanded(self):
        x1 = np.array([0, 1, 3])
        x2 = np.array([2, 2, 0])
        w = np.array([0.5, 0.25, 0.25])
        expanded = moments_batch(np.repeat(x1, [2, 1, 1]), np.repeat(x2, [2, 1, 1]))
        np.testing.assert_allclose(moments_batch(x1, x2, w), expanded)


class TestNullFit:
    def test_asymmetric(self):
        f = fit_bpoi_null(SummaryStats.from_moments(100, 2.0, 1.0, 2.0, 1.0, 0.5))
        assert f.lambda0_hat == pytest.approx(math.sqrt(2) * 0.5)
        assert f.lambda1_hat == pytest.approx(2 - math.sqrt(2) * 0.5)
        assert f.clipped == ()

    def test_negative_correlation_clipped(self):
        f = fit_bpoi_null(SummaryStats.from_moments(100, 2.0, 1.0, 2.0, 1.0, -0.3))
        assert f.lambda0_hat == 0.0
        assert "lambda0" in f.clipped
        assert (f.lambda1_hat, f.lambda2_hat) == (2.0, 1.0)

    def test_upper_clip(self):
        f = fit_bpoi_null(SummaryStats.from_moments(100, 1.0, 4.0, 1.0, 4.0, 0.9))
        assert f.lambda1_hat > 0 and f.lambda0_hat < 1.0
        assert "lambda0" in f.clipped

    def test_symmetric(self):
        f = fit_bpoi_null(SummaryStats.from_moments(100, 1.0, 2.0, 1.0, 2.0, 0.2), symmetric=True)
        assert f.lambda1_hat == f.lambda2_hat == pytest.approx(1.5 * 0.8)
        assert f.lambda0_hat == pytest.approx(0.3)
        assert isinstance(f.params, BPoiParams)


class TestTStar:
    def test_data1_value(self):
        t = t_star(data1_stats())
        assert t == pytest.approx(0.103, abs=0.002)
        assert t_star_p_value(t, 100) == pytest.approx(0.006, abs=0.002)

    def test_zero_at_equidispersion(self):
        assert t_star(SummaryStats.from_moments(50, 1.0, 2.0, 1.0, 2.0, 0.4)) == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateSample):
            t_star(SummaryStats.from_moments(50, 1.0, 1.0, 1.0, 1.0, 1.0))

    @given(st.floats(0.01, 60))
    def test_chi2_sf(self, x):
        assert chi2_2_sf(x) == pytest.approx(stats.chi2.sf(x, 2), rel=1e-12)

    @given(counts)
    def test_swap_invariant(self, pairs):
        a = np.array(pairs)
        t = t_star_batch(a[:, 0], a[:, 1])
        assert np.isnan(t) or t == pytest.approx(float(t_star_batch(a[:, 1], a[:, 0])), rel=1e-9)

    def test_level_under_null(self):
        # n T* is asymptotically chi-square(2)
        d = BPoiParams(1, 1, 1)
        ps = [t_star_p_value(t_star(summarize(sample(d, 500, seed))), 500) for seed in range(400)]
        assert np.mean(np.array(ps) < 0.05) < 0.09


class TestT1:
    @given(st.floats(0, 3), st.floats(0.05, 4), st.floats(0.05, 4))
    def test_population_value_is_one(self, l0, l1, l2):
        g = pmf_grid(BPoiParams(l0, l1, l2), tol=1e-14)
        for f in (F1, F05, monomial(0.5, 0.3)):
            assert t1(g, f) == pytest.approx(1.0, abs=1e-9)

    def test_differs_from_one_off_null(self):
        g = pmf_grid(BnbParams(5, 0.2, 0.2, 0.05), tol=1e-14)
        assert t1(g, F1) < 0.9

    def test_closed_form(self):
        s = data1_stats()
        c = math.sqrt(0.94 * 0.64) * 0.276
        expected = (0.94 + 0.64 + 0.09 - 2 * c) / (1.415 * 0.94 + 1.216 * 0.64 + 0.09 - 2 * c)
        assert t1_dispersion_closed_form(s) == pytest.approx(expected)

    @given(st.floats(0, 3), st.floats(0.05, 4), st.floats(0.05, 4))
    def test_closed_form_agrees_under_null(self, l0, l1, l2):
        g = pmf_grid(BPoiParams(l0, l1, l2), tol=1e-14)
        assert t1_dispersion_closed_form(population_stats(g)) == pytest.approx(t1(g, F1), abs=1e-9)

    def test_hand_computed(self):
        s = BivariateSample.from_pairs([(0, 0), (1, 0), (2, 1), (0, 2)])
        m1, m2 = 0.75, 0.75
        x1 = np.array([0, 1, 2, 0])
        x2 = np.array([0, 0, 1, 2])
        r = np.corrcoef(x1, x2)[0, 1]
        lam0 = math.sqrt(m1 * m2) * r
        num = (m1 - lam0) * np.mean(x1 + 1 - x2) - (m2 - lam0) * np.mean(x1 - x2 - 1)
        den = np.mean((x1 - x2) ** 2)
        assert t1(s, F1) == pytest.approx(num / den)

    def test_zero_denominator(self):
        s = BivariateSample.from_pairs([(1, 1), (2, 2), (0, 0)])
        with pytest.raises(DegenerateSample, match="denominator"):
            t1(s, F1)

    def test_batch_matches_single(self):
        s = [sample(BPoiParams(0.5, 1, 2), 40, k) for k in range(5)]
        x1 = np.stack([a.x1 for a in s])
        x2 = np.stack([a.x2 for a in s])
        np.testing.assert_allclose(t1_batch(x1, x2, F05), [t1(a, F05) for a in s])


class TestSymmetryStatistics:
    @given(st.floats(0, 3), st.floats(0.05, 4))
    def test_t2_zero_under_symmetric_null(self, l0, l):
        g = pmf_grid(BPoiParams(l0, l, l), tol=1e-14)
        assert t2(g, F1) == pytest.approx(0.0, abs=1e-9)
        assert t2(g, F05) == pytest.approx(0.0, abs=1e-9)

    def test_t2_positive_when_asymmetric(self):
        assert t2(pmf_grid(BPoiParams(0.1, 1.25, 0.8), tol=1e-14), F1) > 0.1

    def test_t3_zero_for_symmetric_law(self):
        g = pmf_grid(BHermParams((2, 1.5, 2, 1.5, 1)), tol=1e-14)
        assert t3(g, F1) == pytest.approx(0.0, abs=1e-9)

    def test_t3_requires_alternating(self):
        with pytest.raises(ValueError, match="alternating"):
            t3(BivariateSample([1, 2], [0, 1]), monomial(0.5, 0.5))

    @given(counts)
    def test_swap_properties(self, pairs):
        s = BivariateSample.from_pairs(pairs)
        assert t3(s.swapped(), F05) == pytest.approx(-t3(s, F05), abs=1e-12)
        try:
            a = t2(s, F1)
        except DegenerateSample:
            return
        assert t2(s.swapped(), F1) == pytest.approx(a, rel=1e-9, abs=1e-12)

    def test_t3_swapped_duplicate_is_zero(self):
        s = BivariateSample.from_pairs([(1, 2), (2, 1), (0, 3), (3, 0)])
        assert t3(s, F1) == 0.0


class TestReportSchema:
    def test_json_fields(self):
        r = TestReport("t1", "f1", 0.8, 0.01, "bootstrap", 99, 3)
        assert list(json.loads(r.to_json())) == ["statistic_id", "weight_id", "observed", "p_value", "method", "B", "seed"]

    def test_validation(self):
        with pytest.raises(ValueError):
            TestReport("t1", "f1", 0.8, 1.5, "bootstrap", 99, 3)
        with pytest.raises(ValueError):
            TestReport("t1", "f1", 0.8, 0.5, "bootstrap", None, 3)
        with pytest.raises(ValueError):
            TestReport("t1", "f1", 0.8, 0.5, "magic", 1, 3)
