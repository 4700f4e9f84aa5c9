"""Fitted-model container, time-blocked cross-validation and serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

METHODS = ("OLS", "Lasso", "Ridge", "KNN", "SVR", "DecisionTree", "ISOBaseline")
MODEL_SCHEMA = "drtarget.model/1"


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration limit; ``diagnostics`` has details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class CVConfig:
    """Cross-validation settings.

    ``grid`` overrides the method's default candidate list.  Folds are
    contiguous blocks in time order: the rows are cut into ``folds + 1``
    blocks and fold ``i`` trains on blocks ``0..i`` and validates on block
    ``i + 1``, so no validation row precedes a training row.
    """

    folds: int = 5
    grid: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


@dataclass(frozen=True)
class CVRecord:
    param: str
    candidates: tuple
    mean_scores: tuple
    fold_scores: tuple
    chosen: object

    def to_dict(self):
        return {"param": self.param, "candidates": _jsonable(list(self.candidates)),
                "mean_scores": list(self.mean_scores),
                "fold_scores": [list(f) for f in self.fold_scores],
                "chosen": _jsonable(self.chosen)}

    @classmethod
    def from_dict(cls, d):
        cands = tuple(tuple(c) if isinstance(c, list) else c for c in d["candidates"])
        chosen = tuple(d["chosen"]) if isinstance(d["chosen"], list) else d["chosen"]
        return cls(d["param"], cands, tuple(d["mean_scores"]),
                   tuple(tuple(f) for f in d["fold_scores"]), chosen)


def time_block_splits(n: int, folds: int):
    """Forward-chaining contiguous splits as ``(train_idx, val_idx)`` pairs."""
    if n < folds + 1:
        raise ValueError(f"{n} rows cannot be cut into {folds + 1} time blocks")
    edges = np.linspace(0, n, folds + 2).round().astype(int)
    return [(np.arange(0, edges[i + 1]), np.arange(edges[i + 1], edges[i + 2]))
            for i in range(folds)]


def select_by_cv(X, y, candidates: Sequence, cv: CVConfig, param: str,
                 path_predict: Callable) -> CVRecord:
    """Pick the candidate with the lowest mean validation MSE.

    ``path_predict(X_train, y_train, X_val, candidates)`` returns an array of
    shape ``(len(candidates), len(X_val))``; NaN rows mark candidates that are
    not applicable on that fold.  Ties go to the earlier candidate.
    """
    candidates = list(candidates)
    fold_scores = []
    for tr, va in time_block_splits(len(y), cv.folds):
        preds = np.asarray(path_predict(X[tr], y[tr], X[va], candidates))
        mse = np.mean((preds - y[va]) ** 2, axis=1)
        fold_scores.append(np.where(np.isfinite(mse), mse, np.inf))
    fold_scores = np.array(fold_scores)
    means = fold_scores.mean(axis=0)
    if not np.isfinite(means).any():
        raise ValueError(f"no {param} candidate is applicable to {len(y)} rows")
    best = int(np.argmin(means))
    return CVRecord(param, tuple(candidates), tuple(float(m) for m in means),
                    tuple(tuple(float(s) for s in f) for f in fold_scores), candidates[best])


@dataclass(frozen=True)
class ForecastModel:
    """A fitted predictor.

    ``params`` holds read-only numpy arrays and scalars specific to ``method``;
    use :func:`drtarget.forecast.predict` to evaluate it.
    """

    method: str
    params: dict
    n_features: int
    schema_hash: str | None = None
    cv_record: CVRecord | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        for v in self.params.values():
            if isinstance(v, np.ndarray):
                v.flags.writeable = False

    def save(self, path) -> None:
        """Write a self-describing JSON document (method, schema hash, params)."""
        doc = {
            "schema": MODEL_SCHEMA,
            "method": self.method,
            "n_features": self.n_features,
            "schema_hash": self.schema_hash,
            "params": {k: _encode(v) for k, v in sorted(self.params.items())},
            "cv_record": self.cv_record.to_dict() if self.cv_record else None,
            "info": _jsonable(self.info),
        }
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ForecastModel":
        doc = json.loads(Path(path).read_text())
        if doc.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"{path}: unsupported model schema {doc.get('schema')!r}")
        cvr = CVRecord.from_dict(doc["cv_record"]) if doc["cv_record"] else None
        params = {k: _decode(v) for k, v in doc["params"].items()}
        return cls(doc["method"], params, doc["n_features"], doc["schema_hash"], cvr,
                   doc.get("info", {}))


def _encode(v):
    if isinstance(v, np.ndarray):
        return {"ndarray": v.tolist(), "dtype": str(v.dtype), "shape": list(v.shape)}
    return _jsonable(v)


def _decode(v):
    if isinstance(v, dict) and "ndarray" in v:
        return np.array(v["ndarray"], dtype=v["dtype"]).reshape(v["shape"])
    return v


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D covariate matrix, got shape {X.shape}")
    return X


def check_xy(X, y):
    X = as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y):
        raise ValueError(f"{len(X)} covariate rows but {len(y)} outcomes")
    if len(y) == 0:
        raise ValueError("empty training data")
    return X, y


def log_grid(lo=1e-4, hi=1e2, n=10) -> tuple:
    return tuple(float(v) for v in np.logspace(np.log10(lo), np.log10(hi), n))
