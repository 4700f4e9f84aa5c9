"""epsilon-SVR with a Gaussian kernel, solved in the dual by SMO.

The dual is written over ``a = [alpha, alpha*]`` (length ``2n``) with labels
``s = [+1]*n + [-1]*n``::

    min 0.5 a^T Q a + p^T a,   Q_tu = s_t s_u K(x_t, x_u),
    p = [eps - z, eps + z],    s^T a = 0,   0 <= a <= C

Working pairs are chosen by maximal violation for the first index and the
second-order rule of Fan, Chen & Lin (JMLR 2005) for the second.  The model
is ``f(x) = sum_i (alpha_i - alpha*_i) K(x_i, x) + b``.
"""
from __future__ import annotations

import itertools

import numpy as np

from .base import ConvergenceError, CVConfig, ForecastModel, as_matrix, check_xy, select_by_cv

DEFAULT_GRID = tuple(itertools.product((0.1, 1.0, 10.0), (0.01, 0.1, 1.0), (0.05, 0.1)))
TAU = 1e-12


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A, B = as_matrix(A), as_matrix(B)
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


def smo(K, z, C: float, eps: float, *, tol: float = 1e-3, max_iter: int = 1_000_000):
    """Solve the SVR dual for a precomputed kernel matrix.

    Returns ``(coef, b, n_iter, gap)`` where ``gap`` is the final maximal
    KKT violation ``m(a) - M(a)``.
    """
    z = np.asarray(z, dtype=float)
    n = len(z)
    s = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(2 * n)
    G = np.concatenate([eps - z, eps + z])
    kdiag = np.diag(K).copy()
    kdiag2 = np.concatenate([kdiag, kdiag])
    pos = s > 0

    def column(t):
        row = K[t % n]
        return s[t] * s * np.concatenate([row, row])

    gap = np.inf
    for it in range(max_iter):
        below = a < C
        above = a > 0
        up = np.where(pos, below, above)
        low = np.where(pos, above, below)
        v = -s * G
        v_up = np.where(up, v, -np.inf)
        i = int(np.argmax(v_up))
        gmax = v_up[i]
        v_low = np.where(low, v, np.inf)
        gmin = v_low.min()
        gap = gmax - gmin
        if gap < tol:
            break
        # second-order choice of j among violating partners
        b = gmax - v
        cand = low & (b > 0)
        k_i = K[i % n]
        quad = kdiag2[i] + kdiag2 - 2.0 * np.concatenate([k_i, k_i])
        quad = np.where(quad > 0, quad, TAU)
        score = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(score))

        ai_old, aj_old = a[i], a[j]
        kij = K[i % n, j % n]
        qd = kdiag[i % n] + kdiag[j % n] - 2.0 * kij
        if qd <= 0:
            qd = TAU
        if s[i] != s[j]:
            delta = (-G[i] - G[j]) / qd
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / qd
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        a[i], a[j] = ai, aj
        G += column(i) * (ai - ai_old) + column(j) * (aj - aj_old)
    else:
        raise ConvergenceError(f"SMO did not converge in {max_iter} iterations",
                               {"kkt_violation": float(gap), "n_iter": max_iter})

    coef = a[:n] - a[n:]
    yG = s * G
    free = (a > 0) & (a < C)
    if free.any():
        rho = yG[free].mean()
    else:
        at_upper = a >= C
        ub_mask = np.where(at_upper, ~pos, pos)
        lb_mask = ~ub_mask
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb)
    return coef, float(-rho), it, float(gap)


def _fit_params(X, y, C, gamma, eps, tol, max_iter):
    K = rbf_kernel(X, X, gamma)
    coef, b, n_iter, gap = smo(K, y, C, eps, tol=tol, max_iter=max_iter)
    keep = coef != 0
    return {"support": X[keep].copy(), "coef": coef[keep], "b": b, "gamma": float(gamma),
            "C": float(C), "epsilon": float(eps)}, n_iter, gap


def fit_svr(X, y, cv: CVConfig | None = None, *, params=None, max_rows: int | None = 5000,
            tol: float = 1e-3, max_iter: int = 1_000_000, schema_hash=None) -> ForecastModel:
    """Gaussian-kernel SVR; ``params=(C, gamma, eps)`` fixed or chosen by CV.

    Only the most recent ``max_rows`` training rows are used (``None`` keeps all).
    """
    X, y = check_xy(X, y)
    if max_rows is not None and len(y) > max_rows:
        X, y = X[-max_rows:], y[-max_rows:]
    record = None
    if params is None:
        cv = cv or CVConfig()
        grid = cv.grid or DEFAULT_GRID

        def path_predict(Xtr, ytr, Xva, cands):
            out = []
            kernels = {}
            for C, gamma, eps in cands:
                if gamma not in kernels:
                    kernels[gamma] = (rbf_kernel(Xtr, Xtr, gamma), rbf_kernel(Xva, Xtr, gamma))
                Ktr, Kva = kernels[gamma]
                coef, b, _, _ = smo(Ktr, ytr, C, eps, tol=tol, max_iter=max_iter)
                out.append(Kva @ coef + b)
            return np.array(out)

        record = select_by_cv(X, y, [tuple(g) for g in grid], cv, "C,gamma,epsilon",
                              path_predict)
        params = record.chosen
    C, gamma, eps = params
    fitted, n_iter, gap = _fit_params(X, y, C, gamma, eps, tol, max_iter)
    return ForecastModel("SVR", fitted, X.shape[1], schema_hash, record,
                         {"n_iter": int(n_iter), "kkt_violation": gap, "n_rows": len(y)})


def predict_svr(model: ForecastModel, X) -> np.ndarray:
    p = model.params
    if len(p["coef"]) == 0:
        return np.full(len(X), float(p["b"]))
    return rbf_kernel(X, p["support"], p["gamma"]) @ p["coef"] + p["b"]


def kkt_violation(coef, b: float, K, y, C: float, eps: float) -> float:
    """Largest violation of the SVR optimality conditions on training data.

    With residual ``r = y - f(x)`` and ``sg = sign(coef)``: ``coef = 0`` needs
    ``|r| <= eps``; ``0 < |coef| < C`` needs ``sg * r = eps``; ``|coef| = C``
    needs ``sg * r >= eps``.
    """
    coef = np.asarray(coef, float)
    r = np.asarray(y, float) - (K @ coef + b)
    sg = np.sign(coef)
    zero = coef == 0
    bound = ~zero & (np.abs(coef) >= C * (1 - 1e-12))
    free = ~zero & ~bound
    viol = np.zeros(len(r))
    viol[zero] = np.maximum(np.abs(r[zero]) - eps, 0.0)
    viol[bound] = np.maximum(eps - sg[bound] * r[bound], 0.0)
    viol[free] = np.abs(sg[free] * r[free] - eps)
    return float(viol.max(initial=0.0))
