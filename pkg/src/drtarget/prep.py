"""Standardization, stationarity check, spillover removal and covariates."""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

from .ingest import HOUR, DREvent

N_LAGS = 5
N_CATEGORIES = 48
FEATURE_COLUMNS = (
    [f"cons_lag{i}" for i in range(1, N_LAGS + 1)]
    + [f"temp_lag{i}" for i in range(1, N_LAGS + 1)]
    + [f"wd_h{h:02d}" for h in range(24)]
    + [f"we_h{h:02d}" for h in range(24)]
)
FEATURESET_SCHEMA = "drtarget.featureset/1"


class InsufficientDataError(ValueError):
    """A user does not have enough usable rows; the user is skipped."""


@dataclass(frozen=True)
class StandardizationParams:
    mean: float
    std: float

    def __post_init__(self):
        if not (self.std > 0 and np.isfinite(self.std)):
            raise ValueError(f"std must be positive and finite, got {self.std}")

    def transform(self, x):
        return (x - self.mean) / self.std

    def inverse(self, z):
        return z * self.std + self.mean

    def inverse_shift(self, dz):
        """Convert a difference in standardized units back to physical units."""
        return dz * self.std


def standardize(series, params: StandardizationParams | None = None):
    """Scale to zero mean and unit (population) variance.

    With ``params`` given, apply them instead of fitting.  Returns the
    transformed series and the params used.
    """
    if params is None:
        values = np.asarray(series, dtype=float)
        values = values[np.isfinite(values)]
        if len(values) < 2:
            raise ValueError("need at least two values to standardize")
        std = float(np.std(values))
        if std == 0.0:
            raise ValueError("zero variance series cannot be standardized")
        params = StandardizationParams(float(np.mean(values)), std)
    return params.transform(series), params


# MacKinnon (2010) response-surface coefficients, constant + trend, one variable:
# crit(T) = b0 + b1/T + b2/T^2 + b3/T^3
_ADF_CT_COEFS = {
    "1%": (-3.95877, -9.0531, -28.428, -134.155),
    "5%": (-3.41049, -4.3904, -9.036, -45.374),
    "10%": (-3.12705, -2.5856, -3.925, -22.380),
}


@dataclass(frozen=True)
class ADFResult:
    test_statistic: float
    used_lags: int
    nobs: int
    critical_values: dict

    @property
    def stationary_at_99(self) -> bool:
        return self.test_statistic < self.critical_values["1%"]


def adf_test(series, max_lag: int) -> ADFResult:
    """Augmented Dickey-Fuller test with constant and linear trend.

    Regresses the first difference on a constant, a trend, the lagged level and
    ``max_lag`` lagged differences, and returns the t-statistic of the lagged
    level together with the finite-sample critical values.
    """
    y = np.asarray(series, dtype=float)
    y = y[np.isfinite(y)]
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if len(y) <= 10 * max(max_lag, 1):
        raise ValueError(f"series of length {len(y)} too short for max_lag={max_lag}")
    dy = np.diff(y)
    nobs = len(dy) - max_lag
    cols = [np.ones(nobs), np.arange(1, nobs + 1, dtype=float), y[max_lag:-1]]
    for lag in range(1, max_lag + 1):
        cols.append(dy[max_lag - lag:len(dy) - lag])
    X = np.column_stack(cols)
    target = dy[max_lag:]
    beta, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ beta
    dof = nobs - X.shape[1]
    sigma2 = resid @ resid / dof
    cov = sigma2 * np.linalg.pinv(X.T @ X)
    stat = float(beta[2] / np.sqrt(cov[2, 2]))
    crit = {level: float(np.polyval(coefs[::-1], 1.0 / nobs))
            for level, coefs in _ADF_CT_COEFS.items()}
    return ADFResult(stat, max_lag, nobs, crit)


@dataclass(frozen=True)
class SpilloverSplit:
    """Training hours, DR hours and the excluded spillover hours of a series."""

    training: pd.Series
    dr: pd.Series
    removed: pd.DatetimeIndex


def event_hours(events: Iterable[DREvent]) -> pd.DatetimeIndex:
    hours = [e.hours for e in events]
    if not hours:
        return pd.DatetimeIndex([])
    return hours[0].append(hours[1:]).unique().sort_values()


def spillover_hours(events: Iterable[DREvent], n_hours: int = 8) -> pd.DatetimeIndex:
    """Hours in the ``n_hours`` after each event's last hour that are not event hours."""
    events = list(events)
    dr = event_hours(events)
    out = [pd.date_range(e.last_hour + HOUR, periods=n_hours, freq="h") for e in events]
    if not out or n_hours == 0:
        return pd.DatetimeIndex([])
    spill = out[0].append(out[1:]).unique().sort_values()
    return spill[~spill.isin(dr)]


def remove_spillover(series: pd.Series, events: Iterable[DREvent],
                     spillover: int = 8) -> SpilloverSplit:
    """Move event hours to the DR partition and drop the hours after each event."""
    events = list(events)
    dr = event_hours(events)
    spill = spillover_hours(events, spillover)
    in_dr = series.index.isin(dr)
    in_spill = series.index.isin(spill)
    return SpilloverSplit(series[~in_dr & ~in_spill], series[in_dr],
                          series.index[in_spill])


def hour_category(index: pd.DatetimeIndex) -> np.ndarray:
    """Category 0..47: hour of day, offset by 24 on Saturdays and Sundays."""
    return (index.hour + 24 * (index.dayofweek >= 5)).to_numpy(dtype=int)


@dataclass
class FeatureSet:
    """Covariates and outcomes of one user, split into training and DR rows.

    Outcomes and lag covariates are in standardized units; ``cons_params`` maps
    them back to kWh.
    """

    X0: np.ndarray
    Y0: np.ndarray
    X1: np.ndarray
    Y1: np.ndarray
    t0: pd.DatetimeIndex
    t1: pd.DatetimeIndex
    cons_params: StandardizationParams
    temp_params: StandardizationParams
    user_id: str = ""
    columns: tuple = tuple(FEATURE_COLUMNS)
    diagnostics: dict = field(default_factory=dict)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.columns)

    def save(self, path) -> None:
        """Write a CSV with a ``#`` header carrying schema and scaling params.

        Header lines::

            # schema: drtarget.featureset/1 <sha1 of column list>
            # user_id: <id>
            # cons_params: <mean> <std>
            # temp_params: <mean> <std>

        followed by a CSV table ``timestamp,partition,y,<58 covariates>`` with
        partition 0 for training rows and 1 for DR rows.
        """
        frame = pd.concat([
            self._frame(self.t0, 0, self.Y0, self.X0),
            self._frame(self.t1, 1, self.Y1, self.X1),
        ], ignore_index=True)
        buf = io.StringIO()
        buf.write(f"# schema: {FEATURESET_SCHEMA} {self.schema_hash}\n")
        buf.write(f"# user_id: {self.user_id}\n")
        buf.write(f"# cons_params: {self.cons_params.mean!r} {self.cons_params.std!r}\n")
        buf.write(f"# temp_params: {self.temp_params.mean!r} {self.temp_params.std!r}\n")
        frame.to_csv(buf, index=False, float_format="%.17g", date_format="%Y-%m-%dT%H:%M:%S")
        Path(path).write_text(buf.getvalue())

    def _frame(self, t, part, y, X):
        frame = pd.DataFrame(X, columns=list(self.columns))
        frame.insert(0, "y", y)
        frame.insert(0, "partition", part)
        frame.insert(0, "timestamp", t)
        return frame

    @classmethod
    def load(cls, path) -> "FeatureSet":
        text = Path(path).read_text()
        header = {}
        lines = text.splitlines(keepends=True)
        n_header = 0
        for line in lines:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
            n_header += 1
        schema, _, digest = header.get("schema", "").partition(" ")
        if schema != FEATURESET_SCHEMA:
            raise ValueError(f"{path}: unsupported schema {schema!r}")
        frame = pd.read_csv(io.StringIO("".join(lines[n_header:])), parse_dates=["timestamp"],
                            float_precision="round_trip")
        columns = tuple(frame.columns[3:])
        if schema_hash(columns) != digest:
            raise ValueError(f"{path}: column list does not match schema hash")
        cm, cs = map(float, header["cons_params"].split())
        tm, ts = map(float, header["temp_params"].split())
        train = frame["partition"].to_numpy() == 0
        X = frame[list(columns)].to_numpy(float)
        y = frame["y"].to_numpy(float)
        t = pd.DatetimeIndex(frame["timestamp"])
        return cls(X[train], y[train], X[~train], y[~train], t[train], t[~train],
                   StandardizationParams(cm, cs), StandardizationParams(tm, ts),
                   header.get("user_id", ""), columns)


def schema_hash(columns) -> str:
    return hashlib.sha1(",".join(columns).encode()).hexdigest()[:16]


def build_features(cons: pd.Series, temp: pd.Series, events: Iterable[DREvent],
                   spillover: int = 8, *, min_train_rows: int = 1000,
                   min_dr_rows: int = 10, user_id: str = "") -> FeatureSet:
    """Build lagged covariates for one user from raw aligned hourly series.

    Each target hour needs five complete previous hours of consumption and
    temperature.  Targets at DR hours become DR rows.  Targets at ordinary hours
    become training rows only if none of the lag hours is a DR or spillover
    hour.  Standardization is fitted on the training targets and applied to
    everything.
    """
    events = list(events)
    cons = cons.sort_index()
    temp = temp.reindex(cons.index)
    if len(cons) == 0:
        raise InsufficientDataError(f"user {user_id!r}: empty consumption series")
    grid = pd.date_range(cons.index[0], cons.index[-1], freq="h")
    c = cons.reindex(grid).to_numpy(float)
    T = temp.reindex(grid).to_numpy(float)
    valid = np.isfinite(c) & np.isfinite(T)

    dr = grid.isin(event_hours(events))
    spill = grid.isin(spillover_hours(events, spillover))
    tainted = dr | spill

    n = len(grid)
    lag_ok = np.zeros(n, dtype=bool)
    lag_clean = np.zeros(n, dtype=bool)
    if n > N_LAGS:
        win_valid = np.ones(n - N_LAGS, dtype=bool)
        win_clean = np.ones(n - N_LAGS, dtype=bool)
        for lag in range(1, N_LAGS + 1):
            win_valid &= valid[N_LAGS - lag:n - lag]
            win_clean &= ~tainted[N_LAGS - lag:n - lag]
        lag_ok[N_LAGS:] = win_valid
        lag_clean[N_LAGS:] = win_clean
    target_ok = valid & lag_ok
    rows0 = np.flatnonzero(target_ok & ~tainted & lag_clean)
    rows1 = np.flatnonzero(target_ok & dr)

    diag = {"n_train_rows": len(rows0), "n_dr_rows": len(rows1),
            "n_spillover_hours": int(spill.sum())}
    if len(rows0) < min_train_rows or len(rows1) < min_dr_rows:
        raise InsufficientDataError(
            f"user {user_id!r}: {len(rows0)} training rows (min {min_train_rows}), "
            f"{len(rows1)} DR rows (min {min_dr_rows})")

    _, cons_params = standardize(c[rows0])
    _, temp_params = standardize(T[rows0])
    cz = cons_params.transform(c)
    tz = temp_params.transform(T)
    category = hour_category(grid)

    def design(rows):
        X = np.zeros((len(rows), len(FEATURE_COLUMNS)))
        for lag in range(1, N_LAGS + 1):
            X[:, lag - 1] = cz[rows - lag]
            X[:, N_LAGS + lag - 1] = tz[rows - lag]
        X[np.arange(len(rows)), 2 * N_LAGS + category[rows]] = 1.0
        return X

    return FeatureSet(design(rows0), cz[rows0], design(rows1), cz[rows1],
                      grid[rows0], grid[rows1], cons_params, temp_params,
                      user_id, tuple(FEATURE_COLUMNS), diag)
