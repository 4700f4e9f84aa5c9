"""CAISO "10 in 10" customer baseline with load point adjustment.

Weekday hours are predicted by the mean of the same clock hour over the last
10 prior weekdays without events; weekend and holiday hours by the last 4
prior weekend/holiday days without events.  On an event day every baseline
value is multiplied by the ratio of observed to baseline consumption over the
three hours preceding the hour before the day's first event.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np
import pandas as pd

from ..ingest import HOUR, DREvent


def _day_table(history: pd.Series) -> pd.DataFrame:
    h = history.dropna()
    frame = pd.DataFrame({"day": h.index.normalize(), "hour": h.index.hour, "v": h.to_numpy()})
    return frame.pivot_table(index="day", columns="hour", values="v", aggfunc="first")


def iso_baseline(history: pd.Series, events: Iterable[DREvent], target_hours,
                 *, holidays: Iterable = (), n_weekdays: int = 10, n_weekend: int = 4,
                 adjust: bool = True) -> pd.Series:
    """Baseline consumption for ``target_hours`` (same units as ``history``).

    Hours without enough qualifying history get NaN.  On event days the
    adjustment ratio needs the three pre-event hours to be observed and to
    have a baseline; otherwise the event-day hours are NaN too.
    """
    target_hours = pd.DatetimeIndex(target_hours)
    events = list(events)
    holidays = {pd.Timestamp(d).normalize() for d in holidays}
    table = _day_table(history).reindex(columns=range(24))
    days = table.index
    special = np.array([d.dayofweek >= 5 or d in holidays for d in days], dtype=bool)
    first_event: dict[pd.Timestamp, pd.Timestamp] = {}
    for e in events:
        for h in e.hours:
            d = h.normalize()
            if d not in first_event or h < first_event[d]:
                first_event[d] = h
    event_day = np.array([d in first_event for d in days], dtype=bool)
    values = table.to_numpy(float)
    day_ns = days.asi8

    def raw(ts: pd.Timestamp) -> float:
        d = ts.normalize()
        is_special = d.dayofweek >= 5 or d in holidays
        need = n_weekend if is_special else n_weekdays
        prior = np.flatnonzero((day_ns < d.value) & (special == is_special) & ~event_day)
        col = values[prior, ts.hour]
        col = col[np.isfinite(col)]
        if len(col) < need:
            return np.nan
        return float(col[-need:].mean())

    ratios: dict[pd.Timestamp, float] = {}

    def ratio(day: pd.Timestamp) -> float:
        if day not in ratios:
            start = first_event[day]
            window = [start - k * HOUR for k in (4, 3, 2)]
            observed = history.reindex(window).to_numpy(float)
            base = np.array([raw(t) for t in window])
            if np.all(np.isfinite(observed)) and np.all(np.isfinite(base)) and base.mean() != 0:
                ratios[day] = float(observed.mean() / base.mean())
            else:
                ratios[day] = np.nan
        return ratios[day]

    out = np.empty(len(target_hours))
    for n, ts in enumerate(target_hours):
        value = raw(ts)
        day = ts.normalize()
        if adjust and day in first_event:
            value *= ratio(day)
        out[n] = value
    return pd.Series(out, index=target_hours, name="baseline")
