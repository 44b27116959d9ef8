"""Direct-vs-model diagnostics: W statistic, CV ECDF, correlation."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chi2

from povmap.data import DataError
from povmap.diagnostics import cv_ecdf, direct_model_correlation, w_statistic


class TestWStatistic:
    def test_identical_inputs_zero(self):
        vals = np.array([0.1, 0.2, 0.3])
        ws = w_statistic(vals, np.full(3, 0.01), vals, np.full(3, 0.02))
        assert ws.value == 0.0
        assert ws.df == 3
        assert ws.coherent

    def test_hand_case(self):
        # one area, diff 0.1, variance 0.01, mspe 0.01: W = 0.01/0.02 = 0.5
        ws = w_statistic([0.3], [0.01], [0.2], [0.01])
        assert ws.value == pytest.approx(0.5)
        assert ws.df == 1
        assert ws.chi2_95 == pytest.approx(chi2.ppf(0.95, 1))

    def test_order_invariance(self):
        rng = np.random.default_rng(0)
        d = rng.uniform(0.1, 0.4, 10)
        m = d + rng.normal(0, 0.05, 10)
        dv = rng.uniform(0.001, 0.01, 10)
        mm = rng.uniform(0.001, 0.01, 10)
        ws = w_statistic(d, dv, m, mm)
        perm = rng.permutation(10)
        ws_p = w_statistic(d[perm], dv[perm], m[perm], mm[perm])
        assert ws.value == pytest.approx(ws_p.value, rel=1e-12)

    def test_zero_uncertainty_areas_excluded(self):
        ws = w_statistic(
            [0.1, 0.2], [0.0, 0.01], [0.15, 0.2], [0.0, 0.01], area_ids=["a", "b"]
        )
        assert ws.excluded_areas == ["a"]
        assert ws.df == 1

    def test_all_zero_uncertainty_rejected(self):
        with pytest.raises(DataError):
            w_statistic([0.1], [0.0], [0.2], [0.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError):
            w_statistic([0.1, 0.2], [0.01], [0.1, 0.2], [0.01, 0.01])


class TestCvEcdf:
    def test_single_value(self):
        table, exceed = cv_ecdf([10.0])
        assert table == [(10.0, 1.0)]
        assert exceed[33.3] == 0.0

    def test_two_values(self):
        table, exceed = cv_ecdf([10.0, 40.0])
        assert exceed[33.3] == 0.5
        assert exceed[16.6] == 0.5
        assert table[-1][1] == 1.0

    def test_monotone_and_ends_at_one(self):
        rng = np.random.default_rng(1)
        table, _ = cv_ecdf(rng.uniform(0, 60, 200))
        fracs = [f for _, f in table]
        assert all(b >= a for a, b in zip(fracs, fracs[1:]))
        assert fracs[-1] == 1.0

    def test_exceedance_exact_on_fixture(self):
        cvs = [5.0, 15.0, 18.0, 25.0, 40.0]
        _, exceed = cv_ecdf(cvs)
        assert exceed[16.6] == pytest.approx(3 / 5)
        assert exceed[20.0] == pytest.approx(2 / 5)
        assert exceed[33.3] == pytest.approx(1 / 5)

    @given(st.lists(st.floats(min_value=0, max_value=100), min_size=1, max_size=50))
    def test_properties(self, cvs):
        table, exceed = cv_ecdf(cvs)
        fracs = [f for _, f in table]
        assert all(b >= a for a, b in zip(fracs, fracs[1:]))
        assert fracs[-1] == 1.0
        assert all(0.0 <= v <= 1.0 for v in exceed.values())

    def test_validation(self):
        with pytest.raises(DataError):
            cv_ecdf([])
        with pytest.raises(DataError):
            cv_ecdf([np.nan])


class TestCorrelation:
    def test_perfect(self):
        assert direct_model_correlation([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_matches_numpy(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(0, 1, 30), rng.normal(0, 1, 30)
        assert direct_model_correlation(a, b) == pytest.approx(np.corrcoef(a, b)[0, 1])

    def test_needs_two_points(self):
        with pytest.raises(DataError):
            direct_model_correlation([1.0], [1.0])
