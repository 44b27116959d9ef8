"""Core domain objects: FGT measures, welfare transform, direct estimator."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from povmap.data import (
    DataError,
    SurveyDataset,
    WelfareTransform,
    direct_fgt,
    fgt_area,
    fgt_unit,
    welfare_transform,
)


class TestFgtUnit:
    def test_headcount_indicator(self):
        assert fgt_unit(0.5, 1.0, 0) == 1.0
        assert fgt_unit(1.0, 1.0, 0) == 0.0      # strict inequality at the line
        assert fgt_unit(2.0, 1.0, 0) == 0.0

    def test_gap_and_severity(self):
        # e = 0.25, z = 1: gap 0.75, severity 0.75^2
        assert fgt_unit(0.25, 1.0, 1) == pytest.approx(0.75)
        assert fgt_unit(0.25, 1.0, 2) == pytest.approx(0.5625)

    def test_vectorized(self):
        out = fgt_unit(np.array([0.25, 2.0]), 1.0, 1)
        assert out.tolist() == [0.75, 0.0]

    def test_rejects_bad_inputs(self):
        with pytest.raises(DataError):
            fgt_unit(1.0, 0.0, 0)
        with pytest.raises(DataError):
            fgt_unit(1.0, 1.0, 3)

    @given(
        e=st.floats(min_value=0.0, max_value=10.0),
        z=st.floats(min_value=0.01, max_value=10.0),
    )
    def test_ordering_in_alpha(self, e, z):
        # for nonnegative welfare the gap ratio is in [0,1], so F2 <= F1 <= F0
        f0, f1, f2 = (fgt_unit(e, z, a) for a in (0, 1, 2))
        assert 0.0 <= f2 <= f1 <= f0 <= 1.0


class TestFgtArea:
    def test_all_nonpoor(self):
        assert fgt_area([0, 0, 0]) == 0.0

    def test_all_poor(self):
        assert fgt_area([1, 1]) == 1.0

    def test_mean(self):
        assert fgt_area([1.0, 0.0, 0.5, 0.5]) == pytest.approx(0.5)

    def test_empty(self):
        with pytest.raises(DataError):
            fgt_area([])


class TestWelfareTransform:
    def test_round_trip(self):
        tr = WelfareTransform(shift=0.7)
        e = np.array([0.1, 1.0, 55.0])
        assert np.allclose(tr.inverse(tr.forward(e)), e)

    @given(
        shift=st.floats(min_value=0.0, max_value=5.0),
        value=st.floats(min_value=1e-6, max_value=1e6),
    )
    def test_round_trip_property(self, shift, value):
        tr = WelfareTransform(shift=shift)
        assert tr.inverse(tr.forward(value)) == pytest.approx(value, rel=1e-9, abs=1e-9)

    def test_domain_checks(self):
        with pytest.raises(DataError):
            WelfareTransform(shift=-1.0)
        with pytest.raises(DataError):
            WelfareTransform(shift=1.0).forward(-2.0)

    def test_dispatch(self):
        tr = WelfareTransform(shift=0.0)
        assert welfare_transform(np.e, tr, "forward") == pytest.approx(1.0)
        assert welfare_transform(1.0, tr, "inverse") == pytest.approx(np.e)
        with pytest.raises(DataError):
            welfare_transform(1.0, tr, "sideways")


class TestDirectFgt:
    def test_all_poor_any_weights(self):
        est, var, cv = direct_fgt([0.1, 0.2, 0.3], [5.0, 1.0, 2.0], 1.0, 0)
        assert est == 1.0
        assert var == 0.0
        assert cv == 0.0

    def test_hand_case(self):
        # weights [2,1], F values [1,0], alpha 0: estimate 2/3,
        # variance (1/9)[2*1*(1/3)^2 + 0] = 2/81
        est, var, cv = direct_fgt([0.5, 2.0], [2.0, 1.0], 1.0, 0)
        assert est == pytest.approx(2.0 / 3.0)
        assert var == pytest.approx(2.0 / 81.0)
        assert cv == pytest.approx(np.sqrt(2.0 / 81.0) / (2.0 / 3.0))

    def test_zero_estimate_has_no_cv(self):
        est, var, cv = direct_fgt([5.0, 6.0], [1.0, 1.0], 1.0, 0)
        assert est == 0.0
        assert cv is None

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(DataError):
            direct_fgt([1.0], [0.0], 1.0, 0)

    @given(seed=st.integers(0, 1000))
    def test_estimate_within_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        welfare = rng.uniform(0.1, 3.0, 15)
        weights = rng.uniform(0.5, 10.0, 15)
        for alpha in (0, 1, 2):
            est, var, _ = direct_fgt(welfare, weights, 1.0, alpha)
            assert 0.0 <= est <= 1.0
            assert var >= 0.0


class TestSurveyDataset:
    def test_area_index_and_properties(self):
        s = SurveyDataset(
            area_ids=np.array(["b", "a", "b"]),
            y=np.zeros(3),
            welfare=np.ones(3),
            X=np.zeros((3, 2)),
            weights=np.ones(3),
        )
        assert s.n == 3 and s.p == 2
        assert s.areas == ["a", "b"]
        assert s.area_rows("b").tolist() == [0, 2]

    def test_arrays_frozen(self, small_survey):
        with pytest.raises(ValueError):
            small_survey.y[0] = 1.0

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            SurveyDataset(
                area_ids=np.array(["a", "b"]),
                y=np.zeros(3),
                welfare=np.ones(2),
                X=np.zeros((2, 1)),
                weights=np.ones(2),
            )
