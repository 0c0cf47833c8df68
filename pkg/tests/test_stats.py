from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plcensemble.errors import DegenerateGroups
from plcensemble.stats import anova_oneway, betainc, f_sf

mpmath.mp.dps = 50


@pytest.mark.parametrize("a", [0.5, 1.0, 2.5, 10.0, 99.0])
@pytest.mark.parametrize("b", [0.5, 1.0, 3.0, 40.0])
@pytest.mark.parametrize("x", [1e-6, 0.01, 0.3, 0.5, 0.77, 0.999])
def test_betainc_matches_high_precision(a, b, x):
    exact = float(mpmath.betainc(a, b, 0, x, regularized=True))
    got = betainc(a, b, x)
    assert abs(got - exact) <= 1e-10 * max(exact, 1e-300) or abs(got - exact) < 1e-15


def test_betainc_edges():
    assert betainc(2.0, 3.0, 0.0) == 0.0 and betainc(2.0, 3.0, 1.0) == 1.0
    assert math.isclose(betainc(1.0, 1.0, 0.3), 0.3, rel_tol=1e-14)
    with pytest.raises(ValueError):
        betainc(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        betainc(1.0, 1.0, 1.5)


@pytest.mark.parametrize("f, d1, d2", [(3.0, 2, 6), (42.54, 7, 792), (0.5, 1, 10), (1.0, 4, 4), (12.0, 3, 100)])
def test_f_sf_matches_high_precision(f, d1, d2):
    x = mpmath.mpf(d2) / (d2 + d1 * mpmath.mpf(f))
    exact = float(mpmath.betainc(mpmath.mpf(d2) / 2, mpmath.mpf(d1) / 2, 0, x, regularized=True))
    assert abs(f_sf(f, d1, d2) - exact) <= 1e-10 * exact


def test_f_sf_edges():
    assert f_sf(0.0, 2, 5) == 1.0 and f_sf(math.inf, 2, 5) == 0.0


class TestAnova:
    def test_fixture(self):
        # longhand: grand mean 3, SSB = 3*(1+0+1) = 6, SSW = 3*2 = 6, F = (6/2)/(6/6) = 3
        res = anova_oneway([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
        assert (res.df_between, res.df_within) == (2, 6)
        assert res.ss_between == 6.0 and res.ss_within == 6.0 and res.f_value == 3.0
        # F(2, 6) tail at 3 has the closed form (1 + 2*3/6)^-3 = 1/8
        assert abs(res.p_value - 0.125) <= 1e-12

    def test_identical_groups(self):
        res = anova_oneway([[1, 2, 3], [1, 2, 3]])
        assert res.f_value == 0.0 and res.p_value == 1.0

    def test_zero_within_variance(self):
        res = anova_oneway([[1, 1], [2, 2]])
        assert res.f_value == math.inf and res.p_value == 0.0
        res = anova_oneway([[4, 4], [4, 4, 4]])
        assert res.f_value == 0.0 and res.p_value == 1.0

    def test_degenerate(self):
        with pytest.raises(DegenerateGroups):
            anova_oneway([[1, 2, 3]])
        with pytest.raises(DegenerateGroups):
            anova_oneway([[1, 2], [3]])

    def test_matches_scipy(self, rng):
        from scipy.stats import f_oneway

        groups = [rng.normal(m, 1.0, size=n) for m, n in ((0, 12), (0.5, 20), (1.0, 9))]
        res = anova_oneway(groups)
        ref = f_oneway(*groups)
        assert math.isclose(res.f_value, ref.statistic, rel_tol=1e-12)
        assert math.isclose(res.p_value, ref.pvalue, rel_tol=1e-9)

    @given(
        st.lists(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=8), min_size=2, max_size=5),
        st.floats(-50, 50, allow_nan=False),
        st.randoms(use_true_random=False),
    )
    def test_invariances(self, groups, shift, rnd):
        base = anova_oneway(groups)
        shifted = anova_oneway([[v + shift for v in g] for g in groups])
        permuted = [rnd.sample(g, len(g)) for g in groups]
        relabeled = rnd.sample(permuted, len(permuted))
        for other in (shifted, anova_oneway(permuted), anova_oneway(relabeled)):
            assert other.df_between == base.df_between and other.df_within == base.df_within
            if base.ss_within > 1e-6 * max(1.0, base.ss_between) and other.ss_within > 0:
                assert math.isclose(other.f_value, base.f_value, rel_tol=1e-6, abs_tol=1e-9)
        assert 0.0 <= base.p_value <= 1.0 and base.f_value >= 0.0
