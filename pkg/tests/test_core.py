import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expcast.core import (
    ForecastInstance,
    MetricPair,
    SplitSpec,
    evaluate,
    mae,
    make_windows,
    moving_average_forecast,
    mse,
)
from expcast.errors import InsufficientLengthError, ValidationError


def hourly(n, start="2021-01-01"):
    return np.arange(np.datetime64(start), np.datetime64(start) + np.timedelta64(n, "h"), np.timedelta64(1, "h"))


def enumerate_offsets(n, L, H, stride):
    # oracle: walk every start offset and keep the ones whose window fits
    return [s for s in range(0, n, stride) if s + L + H <= n]


class TestMakeWindows:
    def test_exact_fit(self):
        assert len(make_windows(np.arange(192.0), hourly(192), 168, 24, 24)) == 1

    def test_stride_one_count(self):
        out = make_windows(np.arange(193.0), hourly(193), 168, 24, 1)
        assert len(out) == len(enumerate_offsets(193, 168, 24, 1)) == 2

    @pytest.mark.parametrize("n,L,H,stride", [(300, 96, 96, 96), (500, 168, 24, 24), (97, 10, 5, 7), (40, 3, 2, 1)])
    def test_count_matches_enumeration(self, n, L, H, stride):
        out = make_windows(np.arange(float(n)), hourly(n), L, H, stride)
        assert [w.offset for w in out] == enumerate_offsets(n, L, H, stride)
        assert len(out) == (n - L - H) // stride + 1

    def test_long_term_shapes(self):
        (w,) = make_windows(np.arange(192.0), hourly(192), 96, 96, 96)
        assert w.lookback.size == 96 and w.target.size == 96

    def test_insufficient_length(self):
        with pytest.raises(InsufficientLengthError, match="need 192 points, have 100"):
            make_windows(np.arange(100.0), hourly(100), 168, 24, 24)

    def test_bad_stride(self):
        with pytest.raises(ValidationError):
            make_windows(np.arange(300.0), hourly(300), 168, 24, 0)

    def test_raw_values_round_trip(self):
        rng = np.random.default_rng(3)
        data = rng.normal(1000, 300, size=(250, 3))
        out = make_windows(data, hourly(250), 48, 12, 5, covariate_names=("a", "b"))
        for w in out:
            s = w.offset
            np.testing.assert_array_equal(w.lookback, data[s : s + 48, 0])
            np.testing.assert_array_equal(w.target, data[s + 48 : s + 60, 0])
            np.testing.assert_array_equal(w.dynamic_history, data[s : s + 48, 1:])
            np.testing.assert_array_equal(w.dynamic_future, data[s + 48 : s + 60, 1:])

    def test_chronological(self):
        out = make_windows(np.arange(400.0), hourly(400), 24, 12, 7)
        offsets = [w.offset for w in out]
        assert all(a < b for a, b in zip(offsets, offsets[1:]))

    def test_rejects_uneven_timestamps(self):
        ts = hourly(200).astype("datetime64[m]")
        ts[50] += np.timedelta64(30, "m")
        with pytest.raises(ValidationError, match="constant step"):
            make_windows(np.arange(200.0), ts, 24, 12, 12)


def test_instance_invariants():
    with pytest.raises(ValidationError, match="target length"):
        ForecastInstance("x", np.ones(4), 2, hourly(6), np.zeros((4, 0)), np.zeros((2, 0)), target=np.ones(3))
    with pytest.raises(ValidationError, match="timestamps"):
        ForecastInstance("x", np.ones(4), 2, hourly(5), np.zeros((4, 0)), np.zeros((2, 0)))
    inst = ForecastInstance("x", np.ones(4), 2, hourly(6), np.zeros((4, 0)), np.zeros((2, 0)))
    assert inst.target is None and inst.last_observation == 1.0


class TestMetrics:
    def test_identity(self):
        assert mse([1.5, -2.0], [1.5, -2.0]) == 0.0
        assert mae([1.5, -2.0], [1.5, -2.0]) == 0.0

    def test_values(self):
        assert mse([1, 2], [3, 2]) == 2.0
        assert mse([0], [5]) == 25.0
        assert mae([1, 2], [3, 2]) == 1.0
        assert mae([0], [5]) == 5.0

    @pytest.mark.parametrize("fn", [mse, mae])
    def test_validation(self, fn):
        with pytest.raises(ValidationError, match="length mismatch"):
            fn([1, 2], [1])
        with pytest.raises(ValidationError, match="non-finite"):
            fn([1, np.nan], [1, 2])
        with pytest.raises(ValidationError):
            fn([], [])

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30).flatmap(
            lambda p: st.tuples(st.just(p), st.lists(st.floats(-1e3, 1e3), min_size=len(p), max_size=len(p)))
        ),
        st.floats(-1e3, 1e3),
    )
    def test_properties(self, pair, c):
        p, t = np.array(pair[0]), np.array(pair[1])
        m = evaluate(p, t)
        assert m.mae**2 <= m.mse * (1 + 1e-12) + 1e-12
        perm = np.random.default_rng(0).permutation(len(p))
        assert mse(p[perm], t[perm]) == pytest.approx(m.mse, rel=1e-12, abs=1e-12)
        assert mse(p + c, t + c) == pytest.approx(m.mse, rel=1e-6, abs=1e-6)

    def test_metric_pair_invariant(self):
        with pytest.raises(ValidationError):
            MetricPair(-1.0, 0.0)


class TestMovingAverage:
    def test_constant(self):
        np.testing.assert_array_equal(moving_average_forecast([4.0] * 10, 5, 3), [4.0] * 5)

    def test_tail_mean(self):
        np.testing.assert_array_equal(moving_average_forecast([9.0, 9.0, 2.0, 4.0], 3, 2), [3.0, 3.0, 3.0])

    def test_full_window(self):
        x = np.array([1.0, 2.0, 6.0])
        np.testing.assert_allclose(moving_average_forecast(x, 4, 3), [3.0] * 4)

    def test_window_too_large(self):
        with pytest.raises(ValidationError, match="exceeds"):
            moving_average_forecast([1.0, 2.0], 3, 5)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=20), st.integers(1, 10))
    def test_flat(self, x, H):
        out = moving_average_forecast(x, H, len(x))
        assert out.size == H and np.all(out == out[0])


def test_split_bounds():
    s = SplitSpec(10, 2, 3)
    assert s.bounds() == {"train": (0, 10), "val": (10, 12), "test": (12, 15)}
    with pytest.raises(ValidationError):
        SplitSpec(-1, 0, 0)
