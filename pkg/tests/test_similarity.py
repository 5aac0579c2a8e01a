import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expcast.errors import ValidationError
from expcast.similarity import (
    FeatureVector,
    SimilarityConfig,
    calibrate_dtw_tau,
    combine,
    composite_similarity,
    cosine_similarity,
    dtw_distance,
    extract_features,
    feature_names,
    structural_proximity,
)

from .oracles import dtw_by_enumeration, dtw_top_down, ols_slope

series = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=6)


class TestFeatures:
    def test_constant_series(self):
        f = extract_features([3.0] * 12).as_dict()
        assert f["std"] == 0 and f["slope"] == 0 and f["skew"] == 0
        assert f["acf_lag1"] == f["acf_lag2"] == f["acf_lag3"] == 0
        assert f["mean"] == 3.0 and f["min"] == f["max"] == 3.0

    def test_ramp_slope(self):
        assert extract_features(np.arange(10.0))["slope"] == pytest.approx(ols_slope(list(range(10))), abs=1e-12)
        assert extract_features(np.arange(10.0))["slope"] == pytest.approx(1.0, abs=1e-12)

    def test_alternating_lag1(self):
        f = extract_features([1.0, -1.0] * 4)
        assert f["acf_lag1"] == pytest.approx(-1.0, abs=1e-12)
        assert f["acf_lag2"] == pytest.approx(1.0, abs=1e-12)

    def test_schema(self):
        f = extract_features(np.sin(np.arange(30.0)), p=5)
        assert len(f.values) == len(feature_names(5)) == 11
        with pytest.raises(ValidationError):
            extract_features([1.0])
        with pytest.raises(ValidationError):
            extract_features([1.0, 2.0, 3.0], p=3)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e4, 1e4), min_size=5, max_size=60))
    def test_finite_and_bounded(self, x):
        f = extract_features(x)
        assert all(math.isfinite(v) for v in f.values)
        assert all(-1 <= f[f"acf_lag{k}"] <= 1 for k in (1, 2, 3))

    def test_skew_sign(self):
        assert extract_features([0, 0, 0, 0, 0, 0, 10.0])["skew"] > 0


class TestCosine:
    def fv(self, *v):
        # pad two-dimensional examples into the 9-value schema with zeros
        return FeatureVector(tuple(v) + (0.0,) * (9 - len(v)))

    def test_identity(self):
        a = extract_features(np.sin(np.arange(20.0)))
        assert cosine_similarity(a, a) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity(self.fv(1, 0), self.fv(0, 1)) == 0.0

    def test_opposite_clamped(self):
        assert cosine_similarity(self.fv(1, 0), self.fv(-1, 0), clamp=True) == 0.0
        assert cosine_similarity(self.fv(1, 0), self.fv(-1, 0), clamp=False) == -1.0

    def test_zero_vectors(self):
        assert cosine_similarity(self.fv(), self.fv()) == 0.0

    def test_schema_mismatch(self):
        with pytest.raises(ValidationError):
            cosine_similarity(extract_features(np.arange(10.0), p=3), extract_features(np.arange(10.0), p=2))


class TestDTW:
    def test_identity(self):
        x = np.random.default_rng(0).normal(size=30)
        assert dtw_distance(x, x) == 0.0

    def test_single_cell(self):
        assert dtw_distance([0.0], [5.0]) == 5.0

    def test_stretch(self):
        assert dtw_by_enumeration([1, 2, 3], [1, 2, 2, 3]) == 0.0
        assert dtw_distance([1, 2, 3], [1, 2, 2, 3]) == 0.0

    def test_empty(self):
        with pytest.raises(ValidationError):
            dtw_distance([], [1.0])

    @settings(max_examples=150, deadline=None)
    @given(series, series)
    def test_matches_enumeration(self, a, b):
        assert dtw_distance(a, b) == dtw_by_enumeration(a, b)

    @settings(max_examples=150, deadline=None)
    @given(series, series)
    def test_symmetric_non_negative(self, a, b):
        d = dtw_distance(a, b)
        assert d >= 0 and d == dtw_distance(b, a)

    def test_top_down_oracle_agrees_with_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = rng.uniform(-5, 5, rng.integers(1, 6)).tolist()
            b = rng.uniform(-5, 5, rng.integers(1, 6)).tolist()
            assert dtw_top_down(tuple(a), tuple(b)) == dtw_by_enumeration(a, b)


class TestComposite:
    def test_structural(self):
        cfg = SimilarityConfig(dtw_tau=2.5)
        assert structural_proximity(0.0, cfg) == 1.0
        assert structural_proximity(2.5, cfg) == pytest.approx(0.36787944117144233, abs=1e-9)
        vals = [structural_proximity(d, cfg) for d in (0, 1, 10, 100, 1000)]
        assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-100

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SimilarityConfig(alpha=1.5)
        with pytest.raises(ValidationError):
            SimilarityConfig(dtw_tau=0)

    def test_endpoints(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(5, 1, 24), rng.normal(6, 2, 24)
        s_sem = cosine_similarity(extract_features(a), extract_features(b))
        s_str = structural_proximity(dtw_distance(a, b), SimilarityConfig(dtw_tau=10.0))
        assert composite_similarity(a, b, SimilarityConfig(alpha=1.0, dtw_tau=10.0)) == s_sem
        assert composite_similarity(a, b, SimilarityConfig(alpha=0.0, dtw_tau=10.0)) == s_str

    def test_mixture_arithmetic(self):
        assert combine(0.8, 0.4, 0.5) == pytest.approx(0.6, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=5, max_size=30), st.floats(0, 1))
    def test_self_similarity(self, x, alpha):
        if not any(extract_features(x).values):
            return
        assert composite_similarity(x, x, SimilarityConfig(alpha=alpha)) == pytest.approx(1.0, abs=1e-12)


def test_calibrate_tau():
    rng = np.random.default_rng(0)
    pool = [rng.normal(size=16) for _ in range(10)]
    tau = calibrate_dtw_tau(pool, n_pairs=100, seed=4)
    assert tau == calibrate_dtw_tau(pool, n_pairs=100, seed=4) and tau > 0
    assert calibrate_dtw_tau([np.ones(5)] * 3) == 1.0
    assert calibrate_dtw_tau([np.ones(5)]) == 1.0
