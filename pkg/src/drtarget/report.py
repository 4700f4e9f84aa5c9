"""Accuracy metrics, box-plot summaries and rejection-rate tables."""
from __future__ import annotations

import logging
import math
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .segment import percentile_bins

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["metric", "method", "n", "min", "q1", "median", "q3", "max",
                   "whisker_low", "whisker_high", "n_outliers"]


def mape(y_true, y_pred, floor: float = 0.01) -> float:
    """Mean absolute percentage error in percent.

    Terms whose ``|y_true|`` is below ``floor`` are skipped; NaN when none is left.
    """
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if len(y_true) != len(y_pred):
        raise ValueError("length mismatch")
    ok = np.abs(y_true) >= floor
    if not ok.any():
        return math.nan
    return float(np.mean(np.abs(y_true[ok] - y_pred[ok]) / np.abs(y_true[ok])) * 100.0)


def five_numbers(values) -> dict:
    """Quartiles by linear interpolation (numpy's default) plus Tukey whiskers."""
    v = np.sort(np.asarray(values, dtype=float))
    v = v[np.isfinite(v)]
    if len(v) == 0:
        raise ValueError("no finite values")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = v[(v < lo_fence) | (v > hi_fence)]
    return {"n": len(v), "min": float(v[0]), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": float(v[-1]), "whisker_low": float(inside[0]),
            "whisker_high": float(inside[-1]), "n_outliers": len(outliers),
            "outliers": outliers.tolist()}


def distribution_summary(records: pd.DataFrame, metrics: Sequence[str],
                         by: str = "method") -> tuple[pd.DataFrame, pd.DataFrame]:
    """Box-plot data for each metric and group.

    Returns ``(summary, outliers)``: one summary row per (metric, group) and
    one outlier row per point beyond the whiskers.
    """
    rows, points = [], []
    for metric in metrics:
        for key, grp in records.groupby(by, sort=True):
            values = grp[metric].to_numpy(float)
            if not np.isfinite(values).any():
                continue
            s = five_numbers(values)
            for o in s.pop("outliers"):
                points.append({"metric": metric, by: key, "value": o})
            rows.append({"metric": metric, by: key, **s})
    summary = pd.DataFrame(rows, columns=[c if c != "method" else by for c in SUMMARY_COLUMNS])
    return summary, pd.DataFrame(points, columns=["metric", by, "value"])


def rejection_rates(results: pd.DataFrame, scores: pd.DataFrame, score_column: str,
                    significance_levels: Sequence[float] = (0.95, 0.90, 0.80),
                    n_bins: int = 10) -> tuple[pd.DataFrame, list]:
    """Share of rejected nulls per score-percentile bin, significance and method.

    A null is rejected when ``wilcoxon_p < 1 - significance``.  Users without
    a score are dropped and returned in the second element.
    """
    scored = dict(zip(scores["user_id"].astype(str), scores[score_column]))
    missing = sorted(set(results["user_id"].astype(str)) - set(scored))
    if missing:
        logger.warning("%d users without %s excluded", len(missing), score_column)
    rows = []
    for method, grp in results.groupby("method", sort=True):
        grp = grp[grp["user_id"].astype(str).isin(scored)]
        users = {u: scored[u] for u in grp["user_id"].astype(str)}
        if len(users) < n_bins:
            logger.warning("%s: %d users for %d bins, skipped", method, len(users), n_bins)
            continue
        bins = percentile_bins(users, n_bins).set_index("user_id")["bin"]
        p = grp.set_index(grp["user_id"].astype(str))["wilcoxon_p"]
        b = bins.reindex(p.index)
        for sig in significance_levels:
            rejected = p < (1.0 - sig)
            for k in range(n_bins):
                in_bin = (b == k).to_numpy()
                n = int(in_bin.sum())
                r = int(rejected[in_bin].sum())
                rows.append({"score": score_column, "significance": sig, "method": method,
                             "bin": k, "n_users": n, "n_rejected": r,
                             "rejection_rate": r / n if n else math.nan})
    return pd.DataFrame(rows, columns=["score", "significance", "method", "bin", "n_users",
                                       "n_rejected", "rejection_rate"]), missing


def rejection_tables(results: pd.DataFrame, scores: pd.DataFrame,
                     score_columns: Sequence[str],
                     significance_levels: Sequence[float] = (0.95, 0.90, 0.80),
                     n_bins: int = 10) -> pd.DataFrame:
    tables = [rejection_rates(results, scores, c, significance_levels, n_bins)[0]
              for c in score_columns if c in scores.columns]
    return pd.concat(tables, ignore_index=True) if tables else pd.DataFrame()


def write_csv(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, index=False, float_format="%.12g")


def method_metrics(results: pd.DataFrame, mapes: pd.DataFrame | None = None,
                   scale: Mapping[str, float] | None = None) -> pd.DataFrame:
    """Join per-user estimates and MAPE into one frame for summaries."""
    frame = results.copy()
    if mapes is not None:
        frame = frame.merge(mapes, on=["user_id", "method"], how="left")
    return frame
