"""Least squares, ridge and lasso regression without intercept.

The 48-column hour/weekend one-hot block already spans a constant, so no
separate intercept is fitted.

Objectives:

ridge   ``||y - X b||^2 + lam * ||b||_2^2``
lasso   ``0.5 * ||y - X b||^2 + lam * ||b||_1``

With the lasso scaling, ``b = 0`` is optimal exactly when
``lam >= max|X^T y|``.
"""
from __future__ import annotations

import numpy as np

from .base import (ConvergenceError, CVConfig, ForecastModel, check_xy, log_grid,
                   select_by_cv)

DEFAULT_LAMBDAS = log_grid(1e-4, 1e2, 10)


def fit_ols(X, y, *, schema_hash=None) -> ForecastModel:
    """Minimum-norm least-squares fit."""
    X, y = check_xy(X, y)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return ForecastModel("OLS", {"beta": beta}, X.shape[1], schema_hash)


class _RidgePath:
    """Ridge solutions for many penalties from one thin SVD."""

    def __init__(self, X, y):
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
        self.s, self.Vt = s, Vt
        self.uty = U.T @ y
        self.cutoff = s.max(initial=0.0) * max(X.shape) * np.finfo(float).eps

    def beta(self, lam: float) -> np.ndarray:
        s = self.s
        if lam == 0:
            factor = np.divide(1.0, s, out=np.zeros_like(s), where=s > self.cutoff)
        else:
            factor = s / (s * s + lam)
        return self.Vt.T @ (factor * self.uty)


def ridge_beta(X, y, lam: float) -> np.ndarray:
    X, y = check_xy(X, y)
    return _RidgePath(X, y).beta(float(lam))


def fit_ridge(X, y, cv: CVConfig | None = None, *, lam=None, schema_hash=None) -> ForecastModel:
    """Ridge regression; ``lam`` fixed or chosen by time-blocked CV."""
    X, y = check_xy(X, y)
    record = None
    if lam is None:
        cv = cv or CVConfig()
        grid = cv.grid or DEFAULT_LAMBDAS

        def path_predict(Xtr, ytr, Xva, cands):
            path = _RidgePath(Xtr, ytr)
            return np.array([Xva @ path.beta(c) for c in cands])

        record = select_by_cv(X, y, grid, cv, "lambda", path_predict)
        lam = record.chosen
    beta = ridge_beta(X, y, lam)
    return ForecastModel("Ridge", {"beta": beta, "lambda": float(lam)}, X.shape[1],
                         schema_hash, record)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def lasso_beta(X, y, lam: float, *, tol: float = 1e-7, max_sweeps: int = 100_000,
               beta0=None) -> np.ndarray:
    """Cyclic coordinate descent on the Gram matrix.

    Stops when no coefficient moves by more than ``tol`` in a full sweep.
    """
    X, y = check_xy(X, y)
    gram = X.T @ X
    xty = X.T @ y
    return _lasso_gram(gram, xty, float(lam), tol, max_sweeps, beta0)


def _lasso_gram(gram, xty, lam, tol, max_sweeps, beta0=None):
    p = len(xty)
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    grad = xty - gram @ beta  # X^T (y - X beta)
    diag = np.diag(gram).copy()
    active = np.flatnonzero(diag > 0)
    beta[diag <= 0] = 0.0
    for sweep in range(1, max_sweeps + 1):
        max_step = 0.0
        for j in active:
            old = beta[j]
            z = grad[j] + diag[j] * old
            new = soft_threshold(z, lam) / diag[j]
            step = new - old
            if step != 0.0:
                beta[j] = new
                grad -= step * gram[:, j]
                if abs(step) > max_step:
                    max_step = abs(step)
        if max_step <= tol:
            return beta
    raise ConvergenceError(
        f"lasso coordinate descent did not converge in {max_sweeps} sweeps",
        {"lambda": lam, "last_max_step": max_step, "beta": beta.copy()})


def fit_lasso(X, y, cv: CVConfig | None = None, *, lam=None, tol: float = 1e-7,
              max_sweeps: int = 100_000, schema_hash=None) -> ForecastModel:
    """Lasso regression; ``lam`` fixed or chosen by time-blocked CV."""
    X, y = check_xy(X, y)
    record = None
    if lam is None:
        cv = cv or CVConfig()
        grid = cv.grid or DEFAULT_LAMBDAS

        def path_predict(Xtr, ytr, Xva, cands):
            gram, xty = Xtr.T @ Xtr, Xtr.T @ ytr
            out, beta = {}, None
            # warm starts from the largest penalty down
            for c in sorted(cands, reverse=True):
                beta = _lasso_gram(gram, xty, float(c), tol, max_sweeps, beta)
                out[c] = Xva @ beta
            return np.array([out[c] for c in cands])

        record = select_by_cv(X, y, grid, cv, "lambda", path_predict)
        lam = record.chosen
    beta = lasso_beta(X, y, lam, tol=tol, max_sweeps=max_sweeps)
    return ForecastModel("Lasso", {"beta": beta, "lambda": float(lam)}, X.shape[1],
                         schema_hash, record)


def predict_linear(model: ForecastModel, X) -> np.ndarray:
    return X @ model.params["beta"]
