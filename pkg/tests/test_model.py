import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import bonusmalus as bm
from bonusmalus.model import DomainError, retention

from conftest import table1_params


class TestRetention:
    def test_below_deductible(self):
        assert retention(0.5, 1.0) == 0.5

    def test_above_deductible(self):
        assert retention(2.0, 1.5) == 1.5

    def test_full_insurance(self):
        assert retention(3.0, 0.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            retention(-1.0, 0.5)
        with pytest.raises(DomainError):
            retention(1.0, -0.5)

    @given(st.floats(0, 100), st.floats(0, 100))
    def test_bounded_by_both_arguments(self, y, m):
        r = retention(y, m)
        assert r <= y and r <= m


class TestPremium:
    def test_class1_intercept(self, params):
        assert params.premium(1, 0.0) == 1.0

    def test_class1_at_maturity(self, params):
        assert params.premium(1, 5.0) == pytest.approx(0.3, abs=1e-14)

    def test_class2_constant(self, params):
        assert params.premium(2, 1.3) == 1.1

    def test_clock_outside_horizon(self, params):
        with pytest.raises(DomainError):
            params.premium(1, 5.5)
        with pytest.raises(DomainError):
            params.premium(1, -0.1)


class TestDriftIntegral:
    def test_class1_unit_interval(self, params):
        assert params.drift_integral(1, 0.0, 1.0) == pytest.approx(0.27, abs=1e-14)

    def test_class2_full_clock(self, params):
        assert params.drift_integral(2, 0.0, 2.0) == pytest.approx(0.2, abs=1e-14)

    def test_empty_interval(self, params):
        assert params.drift_integral(1, 2.0, 0.0) == 0.0

    def test_class2_domain_guard(self, params):
        with pytest.raises(DomainError):
            params.drift_integral(2, 1.0, 1.5)

    @given(st.floats(0, 2), st.floats(0, 1.5), st.floats(0, 1.5))
    def test_flow_additivity(self, s, a, b):
        p = table1_params()
        total = s + a + b
        if total > p.horizon_T:
            return
        whole = p.drift_integral(1, s, a + b)
        split = p.drift_integral(1, s, a) + p.drift_integral(1, s + a, b)
        assert whole == pytest.approx(split, rel=1e-12, abs=1e-12)

    @given(st.floats(0.001, 5), st.floats(0, 4))
    def test_strictly_positive(self, delta, s):
        p = table1_params()
        if s + delta > p.horizon_T:
            return
        assert p.drift_integral(1, s, delta) > 0.0


class TestUtility:
    def test_at_zero(self, params):
        assert params.utility(0.0) == -1.0

    def test_at_five(self, params):
        assert params.utility(5.0) == pytest.approx(-math.exp(-2.5), abs=1e-15)
        assert params.utility(5.0) == pytest.approx(-0.082085, abs=1e-6)

    def test_floor_active(self, params):
        assert params.utility(-100.0) == -1.0e10

    def test_no_overflow_at_extreme_wealth(self, params):
        assert params.utility(-1.0e308) == -1.0e10
        assert np.isfinite(params.utility(np.array([-1e6, -1e300, 1e300]))).all()

    @given(st.floats(-50, 50), st.floats(-50, 50))
    def test_nondecreasing(self, a, b):
        u = table1_params().utility
        lo, hi = min(a, b), max(a, b)
        assert u(lo) <= u(hi)

    def test_lipschitz_above(self, params):
        assert params.utility.lipschitz_above(0.0) == pytest.approx(0.5)


class TestClaimLaw:
    def test_cdf_at_zero(self, params):
        assert params.claim_law.cdf(0.0) == 0.0

    def test_cdf_at_one(self, params):
        assert params.claim_law.cdf(1.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
        assert params.claim_law.cdf(1.0) == pytest.approx(0.632121, abs=1e-6)

    def test_tail_beyond_28_means(self, params):
        assert params.claim_law.sf(28.0) < 1e-12

    def test_negative_rejected(self, params):
        with pytest.raises(DomainError):
            params.claim_law.cdf(-0.1)

    def test_cdf_nondecreasing_on_ladder(self, params):
        y = np.linspace(0.0, 40.0, 10_000)
        vals = params.claim_law.cdf(y)
        assert np.all(np.diff(vals) >= 0.0)

    def test_ppf_inverts_cdf(self, params):
        law = params.claim_law
        for u in (0.0, 0.1, 0.5, 0.99, 0.999999):
            assert law.cdf(law.ppf(u)) == pytest.approx(u, abs=1e-12)

    def test_second_moment(self, params):
        assert params.claim_law.second_moment == 2.0

    def test_retention_tail_full_insurance(self, params):
        assert params.claim_law.retention_tail(1.0, 0.0) == 0.0

    def test_retention_tail_against_quadrature(self, params):
        law = params.claim_law
        for b, m in ((0.0, 0.5), (0.3, 1.7), (2.0, 1.0), (1.0, 1.0)):
            y = np.linspace(b, 60.0, 4_000_001)
            ref = np.trapezoid(np.minimum(y, m) * law.pdf(y), y)
            assert law.retention_tail(b, m) == pytest.approx(ref, abs=1e-8)

    def test_invalid_construction(self):
        with pytest.raises(DomainError):
            bm.ClaimLaw(mean=0.0)
        with pytest.raises(DomainError):
            bm.ClaimLaw(mean=1.0, kind="lognormal")


class TestModelValidation:
    def test_income_must_beat_premiums(self):
        with pytest.raises(DomainError):
            bm.ModelParams(
                horizon_T=5.0, class2_reset_S=2.0, intensity_lambda=1.0,
                claim_law=bm.ClaimLaw(mean=1.0),
                deductible_m1=0.0, deductible_m2=0.0,
                premium1=bm.PremiumSpec.affine(1.0, -0.14),
                premium2=bm.PremiumSpec.constant(1.1),
                income_c=1.05,
                utility=bm.UtilitySpec(gamma=0.5),
            )

    def test_reset_time_within_horizon(self):
        with pytest.raises(DomainError):
            bm.ModelParams(
                horizon_T=5.0, class2_reset_S=6.0, intensity_lambda=1.0,
                claim_law=bm.ClaimLaw(mean=1.0),
                deductible_m1=0.0, deductible_m2=0.0,
                premium1=bm.PremiumSpec.constant(1.0),
                premium2=bm.PremiumSpec.constant(1.1),
                income_c=1.2,
                utility=bm.UtilitySpec(gamma=0.5),
            )

    def test_cheap_class2_warns(self):
        with pytest.warns(UserWarning):
            bm.ModelParams(
                horizon_T=5.0, class2_reset_S=2.0, intensity_lambda=1.0,
                claim_law=bm.ClaimLaw(mean=1.0),
                deductible_m1=0.0, deductible_m2=0.0,
                premium1=bm.PremiumSpec.constant(1.1),
                premium2=bm.PremiumSpec.constant(1.0),
                income_c=1.2,
                utility=bm.UtilitySpec(gamma=0.5),
            )


class TestV0:
    def test_terminal_is_utility(self, params):
        for s in (0.0, 1.0, 5.0):
            assert params.v0(1, 5.0, s, 3.3) == params.utility(3.3)

    def test_class2_indicator_kills_long_horizons(self, params):
        assert params.v0(2, 0.0, 0.0, 1.0) == 0.0

    def test_class1_composed_value(self, params):
        expected = -math.exp(-0.5 * 0.27) * math.exp(-1.0)
        got = params.v0(1, 4.0, 0.0, 0.0)
        assert got == pytest.approx(expected, abs=1e-15)
        assert got == pytest.approx(-0.3214, abs=1e-4)

    def test_class2_short_horizon_alive(self, params):
        expected = params.utility(1.0 + params.drift_integral(2, 0.0, 1.0)) * math.exp(-1.0)
        assert params.v0(2, 4.0, 0.5, 1.0) == pytest.approx(expected, abs=1e-15)

    def test_nondecreasing_in_x(self, params):
        x = np.linspace(-20.0, 8.0, 500)
        vals = params.v0(1, 2.0, 1.0, x)
        assert np.all(np.diff(vals) >= 0.0)

    def test_domain_guard(self, params):
        with pytest.raises(DomainError):
            params.v0(2, 3.0, 2.5, 0.0)
        with pytest.raises(DomainError):
            params.v0(1, 2.0, 3.0, 0.0)
