"""Daily load shapes, k-means dictionaries and per-user variability scores."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

HOUR_COLUMNS = [f"h{h:02d}" for h in range(24)]


@dataclass(frozen=True)
class LoadShape:
    values: np.ndarray
    source_user: str = ""
    first_day: pd.Timestamp | None = None
    last_day: pd.Timestamp | None = None


def weekday_profiles(cons: pd.Series) -> tuple[pd.DatetimeIndex, np.ndarray]:
    """Complete (24 finite hours) weekday profiles, in raw units, one row per day."""
    s = cons.dropna()
    if len(s) == 0:
        return pd.DatetimeIndex([]), np.empty((0, 24))
    frame = pd.DataFrame({"day": s.index.normalize(), "hour": s.index.hour, "v": s.to_numpy()})
    table = frame.pivot_table(index="day", columns="hour", values="v", aggfunc="first")
    table = table.reindex(columns=range(24))
    table = table[(table.index.dayofweek < 5) & table.notna().all(axis=1)]
    return pd.DatetimeIndex(table.index), table.to_numpy(float)


def normalize_profiles(profiles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Divide each day by its total; days with zero total are dropped.

    Returns the shapes and the boolean mask of kept days.
    """
    totals = profiles.sum(axis=1)
    keep = totals > 0
    return profiles[keep] / totals[keep, None], keep


def daily_load_shapes(cons: pd.Series) -> tuple[pd.DatetimeIndex, np.ndarray]:
    days, profiles = weekday_profiles(cons)
    shapes, keep = normalize_profiles(profiles)
    return days[keep], shapes


def daily_shapes(cons: pd.Series, window: int = 5, user_id: str = "") -> list[LoadShape]:
    """Weekday load shapes averaged over non-overlapping runs of ``window`` days.

    Consecutive complete weekdays are grouped in order; a trailing group
    shorter than ``window`` is dropped.  Fewer than ``window`` usable days
    gives an empty list.
    """
    days, shapes = daily_load_shapes(cons)
    n_groups = len(shapes) // window
    if n_groups == 0:
        logger.info("user %r: %d complete weekdays, need %d; excluded", user_id,
                    len(shapes), window)
        return []
    out = []
    for g in range(n_groups):
        block = shapes[g * window:(g + 1) * window].mean(axis=0)
        out.append(LoadShape(block / block.sum(), user_id, days[g * window],
                             days[(g + 1) * window - 1]))
    return out


def squared_error(shapes: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(((shapes - centroids[labels]) ** 2).sum())


def _sq_dist(shapes, centroids):
    return ((shapes[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    se: float
    seed: int
    n_iter: int
    se_history: tuple = ()
    restart_histories: tuple = field(default=(), repr=False)

    def assign(self, shapes) -> np.ndarray:
        shapes = np.atleast_2d(np.asarray(shapes, dtype=float))
        return np.argmin(_sq_dist(shapes, self.centroids), axis=1)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


def _kmeans_pp(shapes, k, rng):
    n = len(shapes)
    centers = [int(rng.integers(n))]
    d2 = ((shapes - shapes[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers.append(idx)
        d2 = np.minimum(d2, ((shapes - shapes[idx]) ** 2).sum(axis=1))
    return shapes[centers].copy()


def _lloyd(shapes, centroids, max_iter):
    history = []
    labels = None
    for it in range(1, max_iter + 1):
        new_labels = np.argmin(_sq_dist(shapes, centroids), axis=1)
        history.append(squared_error(shapes, centroids, new_labels))
        if labels is not None and np.array_equal(new_labels, labels):
            return centroids, labels, history, it
        labels = new_labels
        for c in range(len(centroids)):
            members = labels == c
            if members.any():
                centroids[c] = shapes[members].mean(axis=0)
        for c in np.flatnonzero(np.bincount(labels, minlength=len(centroids)) == 0):
            # empty cluster: move it onto the point farthest from its own centroid
            far = ((shapes - centroids[labels]) ** 2).sum(axis=1)
            idx = int(np.argmax(far))
            centroids[c] = shapes[idx]
            labels = labels.copy()
            labels[idx] = c
    labels = np.argmin(_sq_dist(shapes, centroids), axis=1)
    history.append(squared_error(shapes, centroids, labels))
    return centroids, labels, history, max_iter


def kmeans(shapes, k: int, seed: int = 0, *, n_init: int = 10, max_iter: int = 300) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeding; best of ``n_init`` restarts by SE.

    The SE is recorded after every assignment step.
    """
    shapes = np.asarray([s.values if isinstance(s, LoadShape) else s for s in shapes], dtype=float)
    if shapes.ndim != 2 or len(shapes) < k or k < 1:
        raise ValueError(f"need at least k={k} shapes, got {len(shapes)}")
    rng = np.random.default_rng(seed)
    best = None
    histories = []
    for _ in range(n_init):
        init = _kmeans_pp(shapes, k, rng)
        centroids, labels, history, n_iter = _lloyd(shapes, init, max_iter)
        histories.append(tuple(history))
        se = squared_error(shapes, centroids, labels)
        if best is None or se < best[0]:
            best = (se, centroids, labels, history, n_iter)
    se, centroids, labels, history, n_iter = best
    centroids.flags.writeable = False
    labels.flags.writeable = False
    return ClusterModel(k, centroids, labels, se, seed, n_iter, tuple(history), tuple(histories))


def entropy(labels, k: int) -> float:
    """Shannon entropy (natural log) of cluster-assignment frequencies."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise ValueError("no assigned shapes")
    p = np.bincount(labels, minlength=k) / len(labels)
    p = p[p > 0]
    return float(max(0.0, -(p * np.log(p)).sum()))


def hourly_std(cons: pd.Series, *, raw: bool = False) -> float:
    """Sum over the 24 hours of the population std of the daily weekday values.

    Uses normalized load shapes by default, raw hourly consumption with
    ``raw=True``.
    """
    if raw:
        _, values = weekday_profiles(cons)
    else:
        _, values = daily_load_shapes(cons)
    if len(values) < 2:
        raise ValueError(f"need at least 2 complete weekdays, got {len(values)}")
    return float(values.std(axis=0).sum())


def percentile_bins(scores: Mapping[str, float], n_bins: int) -> pd.DataFrame:
    """Rank users by score (ties by user_id) and cut into equal-count bins.

    When the count does not divide evenly the lower bins get one extra user.
    Returns columns ``user_id, score, rank, percentile, bin`` in rank order;
    percentile is ``100 * rank / n`` with ranks from 1.
    """
    n = len(scores)
    if n < n_bins or n_bins < 1:
        raise ValueError(f"{n} users cannot fill {n_bins} bins")
    order = sorted(scores.items(), key=lambda kv: (kv[1], kv[0]))
    frame = pd.DataFrame(order, columns=["user_id", "score"])
    frame["rank"] = np.arange(1, n + 1)
    frame["percentile"] = 100.0 * frame["rank"] / n
    bins = np.empty(n, dtype=int)
    for b, idx in enumerate(np.array_split(np.arange(n), n_bins)):
        bins[idx] = b
    frame["bin"] = bins
    return frame


@dataclass
class Segmentation:
    models: dict
    scores: pd.DataFrame
    excluded: list


def segment_population(cons_by_user: Mapping[str, pd.Series], ks: Sequence[int] = (6, 12, 20),
                       *, window: int = 5, seed: int = 0, n_init: int = 10,
                       percentile_k: int = 20, raw_std: bool = False) -> Segmentation:
    """Cluster the population's averaged shapes for each k and score every user.

    Each user's entropy is computed from the assignment of their daily weekday
    shapes to the centroids.
    """
    pooled, excluded, daily = [], [], {}
    for user in sorted(cons_by_user):
        cons = cons_by_user[user]
        shapes = daily_shapes(cons, window, user)
        _, day_shapes = daily_load_shapes(cons)
        if not shapes or len(day_shapes) < 2:
            excluded.append(user)
            continue
        pooled.extend(s.values for s in shapes)
        daily[user] = day_shapes
    pooled = np.array(pooled)
    models = {}
    rows = {u: {"user_id": u} for u in daily}
    for k in ks:
        model = kmeans(pooled, k, seed, n_init=n_init)
        models[k] = model
        for u, day_shapes in daily.items():
            rows[u][f"entropy_k{k}"] = entropy(model.assign(day_shapes), k)
    for u in daily:
        rows[u]["hourly_std"] = hourly_std(cons_by_user[u], raw=raw_std)
    scores = pd.DataFrame(list(rows.values()),
                          columns=["user_id"] + [f"entropy_k{k}" for k in ks] + ["hourly_std"])
    key = f"entropy_k{percentile_k}" if percentile_k in ks else f"entropy_k{ks[-1]}"
    if len(scores):
        ranked = percentile_bins(dict(zip(scores["user_id"], scores[key])), 1)
        scores = scores.merge(ranked[["user_id", "percentile"]], on="user_id")
    else:
        scores["percentile"] = []
    return Segmentation(models, scores.sort_values("user_id").reset_index(drop=True), excluded)


def centroid_frame(model: ClusterModel) -> pd.DataFrame:
    frame = pd.DataFrame(np.asarray(model.centroids), columns=HOUR_COLUMNS)
    frame.insert(0, "n_members", model.counts)
    frame.insert(0, "cluster", np.arange(model.k))
    return frame

