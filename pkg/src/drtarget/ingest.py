"""Reading meter, temperature, DR-event and flag files into hourly series.

An hourly series throughout the package is a :class:`pandas.Series` indexed by
a naive (local wall-clock) :class:`~pandas.DatetimeIndex` at hour resolution.
Gaps are marked with NaN.

File formats (all UTF-8 CSV with a header row, comma separated):

meter        ``user_id,timestamp,kwh``
temperature  ``timestamp,temp_c``          (irregular spacing allowed)
events       ``user_id,start,duration_hours``
flags        ``user_id,has_solar``         (``has_solar`` in {0,1,true,false})

Timestamps are ISO-8601.  Naive timestamps are taken as local time; timestamps
carrying a UTC offset are converted to the configured timezone and made naive.
Meter and event timestamps must fall on the hour.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

METER_COLUMNS = ("user_id", "timestamp", "kwh")
TEMPERATURE_COLUMNS = ("timestamp", "temp_c")
EVENT_COLUMNS = ("user_id", "start", "duration_hours")
FLAG_COLUMNS = ("user_id", "has_solar")

HOUR = pd.Timedelta(hours=1)


class IngestError(ValueError):
    """Raised for unrecoverable problems with an input file."""


@dataclass(frozen=True)
class RowError:
    line: int
    reason: str


@dataclass(frozen=True)
class DREvent:
    user_id: str
    start: pd.Timestamp
    duration_hours: int = 1

    def __post_init__(self):
        if int(self.duration_hours) < 1:
            raise ValueError(f"duration_hours must be >= 1, got {self.duration_hours}")

    @property
    def hours(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=int(self.duration_hours), freq="h")

    @property
    def last_hour(self) -> pd.Timestamp:
        return self.start + (int(self.duration_hours) - 1) * HOUR


@dataclass(frozen=True)
class UserFlags:
    user_id: str
    has_solar: bool
    corrupt: bool = False


@dataclass
class MeterData:
    """Per-user consumption series plus parse statistics."""

    readings: dict[str, pd.Series]
    n_rows: int
    rejected: list[RowError] = field(default_factory=list)
    corrupt: set[str] = field(default_factory=set)

    @property
    def n_users(self) -> int:
        return len(self.readings)


def _read_frame(path, expected, strict):
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: no such file")
    if path.stat().st_size == 0:
        return pd.DataFrame({c: pd.Series(dtype=str) for c in expected})
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    missing = [c for c in expected if c not in frame.columns]
    if missing:
        raise IngestError(f"{path}: missing columns {missing}")
    extra = [c for c in frame.columns if c not in expected]
    if extra and strict:
        raise IngestError(f"{path}: unknown columns {extra} (strict mode)")
    return frame[list(expected)]


def _parse_times(values: pd.Series, tz: str | None) -> pd.Series:
    """Parse ISO-8601 strings to naive local timestamps; unparseable -> NaT."""
    try:
        parsed = pd.to_datetime(values, errors="coerce", format="ISO8601")
    except (ValueError, TypeError):
        parsed = None  # mixed naive/aware input
    if parsed is not None:
        if getattr(parsed.dt, "tz", None) is not None:
            parsed = parsed.dt.tz_convert(tz or "UTC").dt.tz_localize(None)
        return parsed.astype("datetime64[ns]")
    out = pd.Series(pd.NaT, index=values.index, dtype="datetime64[ns]")
    for idx, text in values.items():
        try:
            ts = pd.Timestamp(text)
        except (ValueError, TypeError):
            continue
        if ts is pd.NaT:
            continue
        if ts.tzinfo is not None:
            ts = ts.tz_convert(tz or "UTC").tz_localize(None)
        out[idx] = ts
    return out


def load_meter_csv(path, *, tz: str | None = None, max_kwh: float = 50.0,
                   strict: bool = False) -> MeterData:
    """Read a meter file and group the readings per user.

    Malformed rows are rejected and reported with their 1-based line number.
    Negative or excessive (``> max_kwh``) readings are rejected and mark the
    user as corrupt.  A duplicated ``(user_id, timestamp)`` pair is a hard
    error.
    """
    frame = _read_frame(path, METER_COLUMNS, strict)
    n_rows = len(frame)
    lines = np.arange(n_rows) + 2
    times = _parse_times(frame["timestamp"], tz)
    kwh = pd.to_numeric(frame["kwh"], errors="coerce")
    users = frame["user_id"].str.strip()

    # checks in priority order; a row gets the first reason that applies
    no_user = (users == "").to_numpy()
    no_time = times.isna().to_numpy()
    off_hour = ~no_time & (times != times.dt.floor("h")).to_numpy()
    no_kwh = ~np.isfinite(kwh.to_numpy(float))
    negative = ~no_kwh & (kwh.to_numpy(float) < 0)
    excessive = ~no_kwh & (kwh.to_numpy(float) > max_kwh)
    bad = no_user | no_time | off_hour | no_kwh | negative | excessive
    keep = ~bad

    rejected = []
    corrupt = set()
    for i in np.flatnonzero(bad):
        if no_user[i]:
            reason = "empty user_id"
        elif no_time[i]:
            reason = f"unparseable timestamp {frame['timestamp'].iat[i]!r}"
        elif off_hour[i]:
            reason = f"timestamp {frame['timestamp'].iat[i]!r} not on the hour"
        elif no_kwh[i]:
            reason = f"non-numeric consumption {frame['kwh'].iat[i]!r}"
        elif negative[i]:
            reason = "negative consumption"
            corrupt.add(users.iat[i])
        else:
            reason = f"excessive consumption {kwh.iat[i]} > {max_kwh}"
            corrupt.add(users.iat[i])
        rejected.append(RowError(int(lines[i]), reason))

    good = pd.DataFrame({"user_id": users[keep], "timestamp": times[keep],
                         "kwh": kwh[keep].astype(float)})
    readings = {}
    for user, grp in good.groupby("user_id", sort=True):
        dup = grp["timestamp"].duplicated()
        if dup.any():
            raise IngestError(f"user {user!r}: duplicate timestamp "
                              f"{grp['timestamp'][dup].iloc[0]}")
        s = pd.Series(grp["kwh"].to_numpy(), index=pd.DatetimeIndex(grp["timestamp"]),
                      name=user).sort_index()
        s.index.name = "timestamp"
        readings[user] = s
    if rejected:
        logger.info("%s: rejected %d of %d rows", path, len(rejected), n_rows)
    return MeterData(readings, n_rows, rejected, corrupt)


def load_temperature_csv(path, *, tz: str | None = None, strict: bool = False) -> pd.Series:
    """Read raw (possibly irregular) temperature observations, sorted by time."""
    frame = _read_frame(path, TEMPERATURE_COLUMNS, strict)
    times = _parse_times(frame["timestamp"], tz)
    values = pd.to_numeric(frame["temp_c"], errors="coerce")
    bad = times.isna() | ~np.isfinite(values)
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise IngestError(f"{path}:{line}: malformed temperature row")
    obs = pd.Series(values.to_numpy(float), index=pd.DatetimeIndex(times), name="temp_c")
    obs.index.name = "timestamp"
    return obs.sort_index(kind="stable")


def load_events_csv(path, *, tz: str | None = None, strict: bool = False) -> dict[str, list[DREvent]]:
    """Read DR events grouped per user, sorted by start; overlaps are an error."""
    frame = _read_frame(path, EVENT_COLUMNS, strict)
    times = _parse_times(frame["start"], tz)
    durations = pd.to_numeric(frame["duration_hours"], errors="coerce")
    events: dict[str, list[DREvent]] = {}
    for i in range(len(frame)):
        line = i + 2
        if pd.isna(times.iat[i]) or times.iat[i] != times.iat[i].floor("h"):
            raise IngestError(f"{path}:{line}: bad event start {frame['start'].iat[i]!r}")
        d = durations.iat[i]
        if not np.isfinite(d) or d != int(d) or d < 1:
            raise IngestError(f"{path}:{line}: bad duration {frame['duration_hours'].iat[i]!r}")
        user = frame["user_id"].iat[i].strip()
        events.setdefault(user, []).append(DREvent(user, times.iat[i], int(d)))
    for user, evs in events.items():
        evs.sort(key=lambda e: e.start)
        for a, b in zip(evs, evs[1:]):
            if b.start <= a.last_hour:
                raise IngestError(f"user {user!r}: overlapping events at {a.start} and {b.start}")
    return dict(sorted(events.items()))


_TRUE = {"1", "true", "yes", "t", "y"}
_FALSE = {"0", "false", "no", "f", "n"}


def load_flags_csv(path, *, strict: bool = False) -> dict[str, UserFlags]:
    frame = _read_frame(path, FLAG_COLUMNS, strict)
    flags = {}
    for i in range(len(frame)):
        user = frame["user_id"].iat[i].strip()
        raw = frame["has_solar"].iat[i].strip().lower()
        if raw not in _TRUE | _FALSE:
            raise IngestError(f"{path}:{i + 2}: bad has_solar value {raw!r}")
        if user in flags:
            raise IngestError(f"{path}:{i + 2}: duplicate flags for user {user!r}")
        flags[user] = UserFlags(user, raw in _TRUE)
    return flags


def mark_corrupt(flags: dict[str, UserFlags], corrupt) -> dict[str, UserFlags]:
    """Return a new flag mapping with ``corrupt`` set for the given users."""
    corrupt = set(corrupt)
    return {u: UserFlags(f.user_id, f.has_solar, f.corrupt or u in corrupt)
            for u, f in flags.items()}


def resample_temperature(obs: pd.Series, *, max_gap_hours: int = 3) -> pd.Series:
    """Resample irregular temperature observations to one value per clock hour.

    Within an hour, every observation stands for the span until the next
    observation in that hour (or the end of the hour); the first observation
    also covers the start of the hour.  The hourly value is the mean weighted
    by those spans, so on-the-hour input is reproduced exactly.

    An hour without observations is interpolated linearly at the hour start
    from the nearest observations on either side that lie within
    ``max_gap_hours``; with only one side in range that value is used.  Hours
    with no observation within ``max_gap_hours`` become NaN (gap marker).
    """
    if len(obs) == 0:
        return pd.Series(dtype=float, name="temp_c")
    obs = obs.sort_index(kind="stable")
    times = obs.index.asi8
    values = obs.to_numpy(dtype=float)
    hours = pd.date_range(obs.index[0].floor("h"), obs.index[-1].floor("h"), freq="h")
    h_ns = HOUR.value
    starts = hours.asi8
    bucket = np.searchsorted(starts, times, side="right") - 1

    out = np.full(len(hours), np.nan)
    # spans within each hour: next observation in the same hour, else hour end
    nxt = np.empty_like(times)
    nxt[:-1] = times[1:]
    nxt[-1] = starts[bucket[-1]] + h_ns
    same = np.zeros(len(times), dtype=bool)
    same[:-1] = bucket[1:] == bucket[:-1]
    end = np.where(same, nxt, starts[bucket] + h_ns)
    begin = times.copy()
    first = np.ones(len(times), dtype=bool)
    first[1:] = bucket[1:] != bucket[:-1]
    begin[first] = starts[bucket[first]]
    weights = (end - begin) / h_ns   # hour fractions; a lone observation weighs exactly 1
    num = np.bincount(bucket, weights * values, minlength=len(hours))
    den = np.bincount(bucket, weights, minlength=len(hours))
    filled = den > 0
    out[filled] = num[filled] / den[filled]

    max_gap = max_gap_hours * h_ns
    for i in np.flatnonzero(~filled):
        t = starts[i]
        j = np.searchsorted(times, t)  # first observation after t (none at t)
        before = j - 1 if j > 0 and t - times[j - 1] <= max_gap else None
        after = j if j < len(times) and times[j] - t <= max_gap else None
        if before is not None and after is not None:
            frac = (t - times[before]) / (times[after] - times[before])
            out[i] = values[before] + frac * (values[after] - values[before])
        elif before is not None:
            out[i] = values[before]
        elif after is not None:
            out[i] = values[after]
    series = pd.Series(out, index=hours, name="temp_c")
    series.index.name = "timestamp"
    return series


def align_series(cons: pd.Series, temp: pd.Series) -> tuple[pd.Series, pd.Series]:
    """Restrict both series to the hours where both carry a value."""
    common = cons.index[cons.notna().to_numpy()]
    common = common[common.isin(temp.index[temp.notna().to_numpy()])]
    if len(common) == 0:
        raise IngestError("consumption and temperature have no hours in common")
    return cons.loc[common], temp.loc[common]


def filter_users(flags: dict[str, UserFlags], users: dict) -> tuple[dict, list[tuple[str, str]]]:
    """Drop users with solar or corrupt readings; return (kept, removal log)."""
    missing = sorted(u for u in users if u not in flags)
    if missing:
        raise IngestError(f"no flags for users {missing}")
    kept, log = {}, []
    for user in sorted(users):
        f = flags[user]
        if f.has_solar:
            log.append((user, "has_solar"))
        elif f.corrupt:
            log.append((user, "corrupt"))
        else:
            kept[user] = users[user]
    return kept, log


def to_hourly(readings: pd.Series) -> pd.Series:
    """Reindex a user's readings onto a contiguous hourly grid (gaps -> NaN)."""
    if len(readings) == 0:
        return readings.astype(float)
    grid = pd.date_range(readings.index[0], readings.index[-1], freq="h")
    out = readings.reindex(grid)
    out.index.name = "timestamp"
    return out
