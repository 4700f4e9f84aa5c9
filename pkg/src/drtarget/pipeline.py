"""Per-user orchestration: features, forecasts, estimates and hold-out MAPE."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import forecast
from .config import Config
from .effects import TreatmentEstimate, estimate
from .forecast import CVConfig, ForecastModel
from .ingest import align_series
from .prep import ADFResult, FeatureSet, adf_test, build_features
from .report import mape

logger = logging.getLogger(__name__)


@dataclass
class UserRun:
    user_id: str
    features: FeatureSet
    adf: ADFResult | None
    estimates: list[TreatmentEstimate] = field(default_factory=list)
    mape: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    predictions: list = field(default_factory=list)   # DataFrames of DR-hour predictions


def fit_options(method: str, cfg: Config, schema_hash=None) -> dict:
    opts = {"schema_hash": schema_hash}
    if method == "Lasso":
        opts.update(tol=cfg.lasso_tol, max_sweeps=cfg.lasso_max_sweeps)
    elif method == "SVR":
        opts.update(max_rows=cfg.svr_max_rows, tol=cfg.svr_tol)
    elif method == "DecisionTree":
        opts.update(min_samples=cfg.tree_min_samples)
    return opts


def cv_config(method: str, cfg: Config) -> CVConfig:
    grid = {"Lasso": cfg.lambda_grid, "Ridge": cfg.lambda_grid, "KNN": cfg.knn_grid,
            "DecisionTree": cfg.tree_depth_grid, "SVR": cfg.svr_grid()}.get(method)
    return CVConfig(folds=cfg.cv_folds, grid=tuple(grid) if grid else None, seed=cfg.seed)


def fit_method(method: str, X, y, cfg: Config, schema_hash=None) -> ForecastModel:
    return forecast.fit(method, X, y, cv_config(method, cfg),
                        **fit_options(method, cfg, schema_hash))


def prepare_user(user_id: str, cons: pd.Series, temp: pd.Series, events, cfg: Config):
    cons, temp = align_series(cons, temp)
    adf = None
    diffed = np.diff(cons.to_numpy(float))
    diffed = diffed[np.isfinite(diffed)]
    if len(diffed) > 10 * max(cfg.adf_max_lag, 1):
        adf = adf_test(diffed, cfg.adf_max_lag)
    fs = build_features(cons, temp, events, cfg.spillover_hours,
                        min_train_rows=cfg.min_train_rows, min_dr_rows=cfg.min_dr_rows,
                        user_id=user_id)
    return cons, fs, adf


def run_user(user_id: str, cons: pd.Series, temp: pd.Series, events, cfg: Config,
             methods=None) -> UserRun:
    """Prepare features for one user and run every forecasting method."""
    cons, fs, adf = prepare_user(user_id, cons, temp, events, cfg)
    return run_features(fs, cons, events, cfg, methods, adf=adf)


def run_features(fs: FeatureSet, cons: pd.Series, events, cfg: Config, methods=None,
                 *, adf: ADFResult | None = None) -> UserRun:
    """Fit every method on a prepared feature set.

    Estimates use models fitted on all training rows.  MAPE uses a second fit
    on the first ``1 - mape_holdout_fraction`` of the training rows, scored on
    the remaining tail in kWh.  ``cons`` is the raw consumption, needed only by
    the ISO baseline.
    """
    methods = list(methods or cfg.methods)
    user_id = fs.user_id
    run = UserRun(user_id, fs, adf)
    cut = int(round(len(fs.Y0) * (1.0 - cfg.mape_holdout_fraction)))
    to_kwh = fs.cons_params.inverse
    y_tail_kwh = to_kwh(fs.Y0[cut:])

    for method in methods:
        if method == "ISOBaseline":
            kw = dict(holidays=cfg.holidays, n_weekdays=cfg.iso_weekdays,
                      n_weekend=cfg.iso_weekend_days)
            y_hat = fs.cons_params.transform(
                forecast.iso_baseline(cons, events, fs.t1, **kw).to_numpy())
            fit_train = fs.cons_params.transform(
                forecast.iso_baseline(cons, events, fs.t0, **kw).to_numpy())
            bias = float(np.nanmean(fs.Y0 - fit_train))
            tail_kwh = to_kwh(fit_train[cut:])
        else:
            model = fit_method(method, fs.X0, fs.Y0, cfg, fs.schema_hash)
            run.models[method] = model
            y_hat = forecast.predict(model, fs.X1)
            bias = float(np.mean(fs.Y0 - forecast.predict(model, fs.X0)))
            tail_model = fit_method(method, fs.X0[:cut], fs.Y0[:cut], cfg, fs.schema_hash)
            tail_kwh = to_kwh(forecast.predict(tail_model, fs.X0[cut:]))
        run.estimates.append(estimate(user_id, method, fs.Y1, y_hat, bias=bias,
                                      scale=fs.cons_params.std, alternative=cfg.alternative,
                                      mpr_floor=cfg.mpr_floor))
        ok = np.isfinite(tail_kwh)
        run.mape[method] = mape(y_tail_kwh[ok], tail_kwh[ok], floor=cfg.mape_floor_kwh)
        run.predictions.append(pd.DataFrame({
            "user_id": user_id, "method": method, "timestamp": fs.t1,
            "y": fs.Y1, "y_hat": y_hat, "bias": bias, "scale": fs.cons_params.std}))
    return run
