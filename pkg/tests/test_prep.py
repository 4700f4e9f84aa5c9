import numpy as np
import pandas as pd
import pytest

from drtarget.ingest import DREvent
from drtarget.prep import (FEATURE_COLUMNS, FeatureSet, InsufficientDataError, adf_test,
                           build_features, hour_category, remove_spillover, standardize)


def test_standardize_definition():
    z, p = standardize(np.array([1.0, 2.0, 3.0]))
    assert p.mean == 2.0 and p.std == pytest.approx(np.sqrt(2 / 3))
    assert z.mean() == pytest.approx(0.0, abs=1e-15)


def test_standardize_constant_errors():
    with pytest.raises(ValueError):
        standardize(np.ones(10))


def test_standardize_roundtrip():
    x = np.random.default_rng(1).normal(5, 3, 500)
    z, p = standardize(x)
    np.testing.assert_allclose(p.inverse(z), x, atol=1e-12)
    z2, _ = standardize(x, p)
    np.testing.assert_array_equal(z, z2)


def test_adf_random_walk_not_stationary():
    x = np.cumsum(np.random.default_rng(0).normal(size=2000))
    assert not adf_test(x, 5).stationary_at_99


def test_adf_white_noise_stationary():
    x = np.random.default_rng(0).normal(size=2000)
    assert adf_test(x, 5).stationary_at_99


def test_adf_differenced_trend_stationary():
    rng = np.random.default_rng(2)
    x = 0.05 * np.arange(2000) + rng.normal(size=2000)
    assert adf_test(np.diff(x), 5).stationary_at_99


@pytest.mark.parametrize("lag", [0, 3, 12])
def test_adf_matches_statsmodels(lag):
    from statsmodels.tsa.stattools import adfuller

    x = np.cumsum(np.random.default_rng(lag).normal(size=800)) * 0.1 + \
        np.random.default_rng(9).normal(size=800)
    ours = adf_test(x, lag)
    ref = adfuller(x, maxlag=lag, regression="ct", autolag=None)
    assert ours.test_statistic == pytest.approx(ref[0], rel=1e-8)
    for key in ("1%", "5%", "10%"):
        assert ours.critical_values[key] == pytest.approx(ref[4][key], rel=1e-6)


def test_adf_too_short_errors():
    with pytest.raises(ValueError):
        adf_test(np.arange(20.0), 5)


def hourly(n, start="2020-01-06", values=None):
    idx = pd.date_range(start, periods=n, freq="h")
    return pd.Series(np.arange(n, dtype=float) if values is None else values, index=idx)


def test_spillover_single_event():
    s = hourly(48)
    ev = [DREvent("a", pd.Timestamp("2020-01-06 14:00"))]
    split = remove_spillover(s, ev)
    assert list(split.dr.index) == [pd.Timestamp("2020-01-06 14:00")]
    assert list(split.removed) == list(pd.date_range("2020-01-06 15:00", "2020-01-06 22:00", freq="h"))
    assert len(split.training) == 48 - 1 - 8


def test_spillover_no_events_identity():
    s = hourly(24)
    split = remove_spillover(s, [])
    pd.testing.assert_series_equal(split.training, s)
    assert len(split.dr) == 0 and len(split.removed) == 0


def test_spillover_adjacent_events():
    ev = [DREvent("a", pd.Timestamp("2020-01-06 14:00")), DREvent("a", pd.Timestamp("2020-01-06 15:00"))]
    split = remove_spillover(hourly(48), ev)
    assert list(split.removed) == list(pd.date_range("2020-01-06 16:00", "2020-01-06 23:00", freq="h"))
    assert len(split.dr) == 2


def test_hour_category_weekend_block():
    idx = pd.DatetimeIndex(["2020-01-04 00:00", "2020-01-06 13:00", "2020-01-05 23:00"])
    assert hour_category(idx).tolist() == [24, 13, 47]


def make_user(n_days=60, events=(), seed=0):
    rng = np.random.default_rng(seed)
    idx = pd.date_range("2020-01-06", periods=24 * n_days, freq="h")
    cons = pd.Series(2 + np.sin(np.arange(len(idx)) * 2 * np.pi / 24) + rng.normal(0, .1, len(idx)),
                     index=idx)
    temp = pd.Series(10 + rng.normal(0, 1, len(idx)), index=idx)
    return cons, temp, [DREvent("a", pd.Timestamp(t)) for t in events]


def test_feature_width_and_one_hot():
    cons, temp, ev = make_user(events=["2020-01-20 14:00"])
    fs = build_features(cons, temp, ev, min_train_rows=100, min_dr_rows=1)
    assert fs.X0.shape[1] == 58 == len(FEATURE_COLUMNS)
    np.testing.assert_array_equal(fs.X0[:, 10:].sum(axis=1), 1.0)
    np.testing.assert_array_equal(fs.X1[:, 10:].sum(axis=1), 1.0)
    assert len(fs.Y1) == 1


def test_saturday_midnight_encoding():
    cons, temp, _ = make_user()
    fs = build_features(cons, temp, [], min_train_rows=100, min_dr_rows=0)
    row = np.flatnonzero(fs.t0 == pd.Timestamp("2020-01-11 00:00"))[0]
    assert fs.X0[row, 10 + 24] == 1.0


def test_partition_disjoint_and_standardized():
    cons, temp, ev = make_user(events=["2020-01-20 14:00", "2020-02-03 09:00"])
    fs = build_features(cons, temp, ev, min_train_rows=100, min_dr_rows=1)
    bad = set(pd.date_range("2020-01-20 14:00", periods=9, freq="h")) | \
        set(pd.date_range("2020-02-03 09:00", periods=9, freq="h"))
    assert not bad & set(fs.t0)
    assert abs(fs.Y0.mean()) < 1e-10 and abs(fs.Y0.std() - 1) < 1e-10
    # no training row has a lag inside an event or its spillover window
    for lag in range(1, 6):
        assert not bad & set(fs.t0 - pd.Timedelta(hours=lag))


def test_lag_columns_are_previous_hours():
    cons, temp, _ = make_user()
    fs = build_features(cons, temp, [], min_train_rows=100, min_dr_rows=0)
    t = fs.t0[50]
    for lag in range(1, 6):
        expect = fs.cons_params.transform(cons[t - pd.Timedelta(hours=lag)])
        assert fs.X0[50, lag - 1] == pytest.approx(expect, abs=1e-12)


def test_gaps_drop_windows():
    cons, temp, _ = make_user()
    cons.iloc[100] = np.nan
    fs = build_features(cons, temp, [], min_train_rows=100, min_dr_rows=0)
    gap = cons.index[100]
    for lag in range(0, 6):
        assert gap + pd.Timedelta(hours=lag) not in set(fs.t0)


def test_shift_by_week_equivariant():
    cons, temp, ev = make_user(events=["2020-01-20 14:00"])
    a = build_features(cons, temp, ev, min_train_rows=100, min_dr_rows=1)
    wk = pd.Timedelta(days=7)
    cons2, temp2 = cons.copy(), temp.copy()
    cons2.index, temp2.index = cons.index + wk, temp.index + wk
    b = build_features(cons2, temp2, [DREvent("a", e.start + wk) for e in ev],
                       min_train_rows=100, min_dr_rows=1)
    np.testing.assert_array_equal(a.X0, b.X0)
    np.testing.assert_array_equal(a.X1, b.X1)


def test_insufficient_data():
    cons, temp, _ = make_user(n_days=5)
    with pytest.raises(InsufficientDataError):
        build_features(cons, temp, [])


def test_featureset_roundtrip(tmp_path):
    cons, temp, ev = make_user(events=["2020-01-20 14:00"])
    fs = build_features(cons, temp, ev, min_train_rows=100, min_dr_rows=1, user_id="u1")
    fs.save(tmp_path / "f.csv")
    back = FeatureSet.load(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.X0, fs.X0)
    np.testing.assert_array_equal(back.Y1, fs.Y1)
    assert back.t1.equals(fs.t1) and back.user_id == "u1"
    assert back.cons_params == fs.cons_params and back.schema_hash == fs.schema_hash
