import numpy as np
import pandas as pd
import pytest

from drtarget.forecast import iso_baseline
from drtarget.ingest import DREvent

START = pd.Timestamp("2020-01-06")          # a Monday


def history(n_days, fn):
    idx = pd.date_range(START, periods=24 * n_days, freq="h")
    return pd.Series([fn(t) for t in idx], index=idx, dtype=float)


def test_constant_history():
    h = history(15, lambda t: 3.0)
    ev = [DREvent("a", pd.Timestamp("2020-01-20 14:00"), 2)]
    out = iso_baseline(h, ev, ev[0].hours)
    assert (out == 3.0).all()


def test_mean_of_last_ten_weekdays():
    # weekday number k (1..10) reads k at 14:00
    days = [d for d in pd.date_range(START, periods=14) if d.dayofweek < 5]
    rank = {d: i + 1 for i, d in enumerate(days)}
    h = history(14, lambda t: rank.get(t.normalize(), 0.0) if t.hour == 14 else 1.0)
    out = iso_baseline(h, [], [pd.Timestamp("2020-01-20 14:00")])
    assert out.iloc[0] == 5.5


def test_event_days_excluded_from_history():
    h = history(16, lambda t: 100.0 if t.normalize() == pd.Timestamp("2020-01-07") else 1.0)
    ev = [DREvent("a", pd.Timestamp("2020-01-07 14:00"))]
    out = iso_baseline(h, ev, [pd.Timestamp("2020-01-22 14:00")])
    assert out.iloc[0] == 1.0


def test_weekend_uses_weekend_days():
    h = history(35, lambda t: 7.0 if t.dayofweek >= 5 else 2.0)
    out = iso_baseline(h, [], [pd.Timestamp("2020-02-08 12:00"), pd.Timestamp("2020-02-07 12:00")])
    assert out.tolist() == [7.0, 2.0]


def test_holiday_treated_as_weekend():
    h = history(35, lambda t: 7.0 if t.dayofweek >= 5 else 2.0)
    out = iso_baseline(h, [], [pd.Timestamp("2020-02-07 12:00")], holidays=["2020-02-07"])
    assert out.iloc[0] == 7.0


def test_insufficient_history_is_nan():
    h = history(5, lambda t: 1.0)
    assert np.isnan(iso_baseline(h, [], [pd.Timestamp("2020-01-10 12:00")]).iloc[0])


def hand_example():
    """15 days; hourly means 10*(h+1); alternating +-1 days average out exactly.
    The event day reads 1.2x the hourly mean in the three pre-event hours."""
    event_day = pd.Timestamp("2020-01-20")
    ev = [DREvent("a", event_day + pd.Timedelta(hours=14), 3)]
    pre = {event_day + pd.Timedelta(hours=h) for h in (10, 11, 12)}

    def value(t):
        mean = 10.0 * (t.hour + 1)
        if t in pre:
            return mean * 6 / 5          # exact in binary for these means
        wiggle = 1.0 if t.day % 2 else -1.0
        return mean + wiggle

    return history(15, value), ev


def test_caiso_hand_example_exact():
    h, ev = hand_example()
    hours = ev[0].hours
    raw = iso_baseline(h, ev, hours, adjust=False)
    adjusted = iso_baseline(h, ev, hours)
    # ten prior weekdays: Jan 6-10 and 13-17, five odd and five even dates
    np.testing.assert_array_equal(raw.to_numpy(), [150.0, 160.0, 170.0])
    np.testing.assert_array_equal(adjusted.to_numpy(), 1.2 * raw.to_numpy())


def test_missing_pre_event_hours_give_nan():
    h, ev = hand_example()
    h = h.drop(pd.Timestamp("2020-01-20 11:00"))
    assert iso_baseline(h, ev, ev[0].hours).isna().all()
