"""k-nearest-neighbour regression under the Euclidean norm.

Training rows are kept in time order; equal distances are resolved in favour
of the earlier row.
"""
from __future__ import annotations

import numpy as np

from .base import CVConfig, ForecastModel, as_matrix, check_xy, select_by_cv

DEFAULT_KS = (2, 4, 8, 16, 32, 64, 128)
_CHUNK_BYTES = 32 * 2**20


def neighbours(Xtrain, Xquery, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest training rows per query, nearest first."""
    Xtrain, Xquery = as_matrix(Xtrain), as_matrix(Xquery)
    n = len(Xtrain)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    out = np.empty((len(Xquery), k), dtype=int)
    chunk = max(1, _CHUNK_BYTES // max(1, 8 * n * Xtrain.shape[1]))
    order = np.arange(n)
    for start in range(0, len(Xquery), chunk):
        q = Xquery[start:start + chunk]
        d2 = ((q[:, None, :] - Xtrain[None, :, :]) ** 2).sum(axis=2)
        if k < n:
            kth = np.partition(d2, k - 1, axis=1)[:, k - 1:k]
        for r in range(len(q)):
            row = d2[r]
            cand = order if k == n else np.flatnonzero(row <= kth[r, 0])
            sel = cand[np.lexsort((cand, row[cand]))][:k]
            out[start + r] = sel
    return out


def fit_knn(X, y, cv: CVConfig | None = None, *, k=None, schema_hash=None) -> ForecastModel:
    """Store the training data; ``k`` fixed or chosen by time-blocked CV."""
    X, y = check_xy(X, y)
    record = None
    if k is None:
        cv = cv or CVConfig()
        grid = cv.grid or DEFAULT_KS

        def path_predict(Xtr, ytr, Xva, cands):
            usable = [c for c in cands if c <= len(ytr)]
            preds = np.full((len(cands), len(Xva)), np.nan)
            if not usable:
                return preds
            nb = neighbours(Xtr, Xva, max(usable))
            csum = np.cumsum(ytr[nb], axis=1)
            for i, c in enumerate(cands):
                if c <= len(ytr):
                    preds[i] = csum[:, c - 1] / c
            return preds

        record = select_by_cv(X, y, grid, cv, "k", path_predict)
        k = record.chosen
    k = int(k)
    if k > len(y) or k < 1:
        raise ValueError(f"k={k} but only {len(y)} training rows")
    return ForecastModel("KNN", {"X": X.copy(), "y": y.copy(), "k": k}, X.shape[1],
                         schema_hash, record)


def predict_knn(model: ForecastModel, X) -> np.ndarray:
    p = model.params
    nb = neighbours(p["X"], X, int(p["k"]))
    return p["y"][nb].mean(axis=1)
