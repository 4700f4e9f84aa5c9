"""Counterfactual consumption forecasters with a uniform fit/predict contract."""
from __future__ import annotations

import numpy as np

from .base import (METHODS, ConvergenceError, CVConfig, CVRecord, ForecastModel,
                   SchemaMismatch, time_block_splits)
from .baseline import iso_baseline
from .knn import fit_knn, predict_knn
from .linear import fit_lasso, fit_ols, fit_ridge, predict_linear
from .svr import fit_svr, predict_svr
from .tree import fit_tree, predict_tree

_PREDICT = {
    "OLS": predict_linear,
    "Lasso": predict_linear,
    "Ridge": predict_linear,
    "KNN": predict_knn,
    "SVR": predict_svr,
    "DecisionTree": predict_tree,
}

FEATURE_METHODS = tuple(_PREDICT)


def predict(model: ForecastModel, X, *, schema_hash: str | None = None) -> np.ndarray:
    """Predict outcomes (standardized units) for covariate rows ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaMismatch(f"{model.method} expects {model.n_features} columns, "
                             f"got shape {X.shape}")
    if schema_hash is not None and model.schema_hash is not None \
            and schema_hash != model.schema_hash:
        raise SchemaMismatch(f"schema {schema_hash} differs from training schema "
                             f"{model.schema_hash}")
    if model.method not in _PREDICT:
        raise ValueError(f"{model.method} does not predict from covariates")
    return _PREDICT[model.method](model, X)


def fit(method: str, X, y, cv: CVConfig | None = None, **options) -> ForecastModel:
    """Fit ``method`` (one of :data:`FEATURE_METHODS`) with CV-chosen hyperparameters."""
    if method == "OLS":
        return fit_ols(X, y, **options)
    fitters = {"Lasso": fit_lasso, "Ridge": fit_ridge, "KNN": fit_knn,
               "SVR": fit_svr, "DecisionTree": fit_tree}
    if method not in fitters:
        raise ValueError(f"cannot fit {method!r} from covariates")
    return fitters[method](X, y, cv, **options)


__all__ = [
    "METHODS", "FEATURE_METHODS", "ConvergenceError", "CVConfig", "CVRecord",
    "ForecastModel", "SchemaMismatch", "fit", "fit_knn", "fit_lasso", "fit_ols",
    "fit_ridge", "fit_svr", "fit_tree", "iso_baseline", "predict", "time_block_splits",
]
