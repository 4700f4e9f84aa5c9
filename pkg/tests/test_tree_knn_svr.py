import itertools

import numpy as np
import pytest

from drtarget.forecast import CVConfig, fit_knn, fit_svr, fit_tree, predict
from drtarget.forecast.knn import neighbours
from drtarget.forecast.svr import kkt_violation, rbf_kernel, smo
from drtarget.forecast.tree import best_split, grow


# ---------------------------------------------------------------- KNN

def test_knn_k1_exact_row():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(30, 3)), rng.normal(size=30)
    m = fit_knn(X, y, k=1)
    np.testing.assert_array_equal(predict(m, X[[4, 17]]), y[[4, 17]])


def test_knn_k_n_is_global_mean():
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(25, 4)), rng.normal(size=25)
    m = fit_knn(X, y, k=25)
    np.testing.assert_allclose(predict(m, rng.normal(size=(7, 4))), y.mean(), rtol=0, atol=1e-12)


def test_knn_hand_2d():
    X = np.array([[0, 0], [1, 0], [0, 2], [5, 5], [6, 5]], float)
    y = np.array([1.0, 3.0, 10.0, 20.0, 30.0])
    m = fit_knn(X, y, k=2)
    # query (0.4, 0.1): distances^2 0.17, 0.37, 3.77, ... -> rows 0, 1
    assert predict(m, np.array([[0.4, 0.1]]))[0] == pytest.approx(2.0)
    assert predict(m, np.array([[5.6, 5.0]]))[0] == pytest.approx(25.0)


def test_knn_ties_prefer_earlier_row():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    assert neighbours(X, np.array([[0.0]]), 2).tolist() == [[0, 1]]


def test_knn_cv_chooses_within_grid():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 2))
    y = np.sin(X[:, 0]) + 0.05 * rng.normal(size=300)
    m = fit_knn(X, y, CVConfig(folds=3, grid=(1, 4, 16, 512)))
    assert m.params["k"] in (1, 4, 16)


# ---------------------------------------------------------------- SVR

def test_svr_tube_absorbs_constant():
    X = np.linspace(0, 1, 20)[:, None]
    y = 3.0 + 0.01 * np.sin(10 * X[:, 0])
    m = fit_svr(X, y, params=(1.0, 1.0, 0.1))
    assert len(m.params["coef"]) == 0
    assert np.all(np.abs(predict(m, X) - y) <= 0.1 + 1e-9)


def test_svr_kkt_and_interior_zero():
    rng = np.random.default_rng(3)
    X = rng.uniform(-3, 3, size=(150, 1))
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=150)
    C, gamma, eps = 10.0, 0.5, 0.05
    K = rbf_kernel(X, X, gamma)
    coef, b, _, _ = smo(K, y, C, eps, tol=1e-6)
    assert kkt_violation(coef, b, K, y, C, eps) < 1e-4
    resid = y - (K @ coef + b)
    inside = np.abs(resid) < eps - 1e-4
    assert np.all(coef[inside] == 0)


def test_svr_matches_sklearn():
    from sklearn.svm import SVR

    rng = np.random.default_rng(4)
    X = rng.normal(size=(120, 3))
    y = X[:, 0] - 0.5 * X[:, 1] ** 2 + 0.1 * rng.normal(size=120)
    ours = fit_svr(X, y, params=(1.0, 0.3, 0.1), tol=1e-6)
    ref = SVR(C=1.0, gamma=0.3, epsilon=0.1, tol=1e-6).fit(X, y)
    Xq = rng.normal(size=(40, 3))
    np.testing.assert_allclose(predict(ours, Xq), ref.predict(Xq), atol=1e-3)


def test_svr_beats_linear_on_sine():
    from drtarget.forecast import fit_ols

    X = np.linspace(0, 2 * np.pi, 200)[:, None]
    y = np.sin(X[:, 0]) + 2.0
    Xl = np.hstack([X, np.ones_like(X)])
    err_lin = np.mean(np.abs(predict(fit_ols(Xl, y), Xl) - y) / y)
    err_svr = np.mean(np.abs(predict(fit_svr(X, y, params=(10.0, 1.0, 0.01)), X) - y) / y)
    assert err_svr < err_lin


# ---------------------------------------------------------------- CART

def _leaves(node):
    if node.is_leaf:
        return [node]
    return _leaves(node.left) + _leaves(node.right)


def test_tree_pure_node_is_leaf():
    m = fit_tree(np.random.default_rng(0).normal(size=(20, 2)), np.full(20, 4.0), max_depth=5)
    assert len(m.params["feature"]) == 1 and m.params["value"][0] == 4.0


def test_tree_step_function_depth1():
    X = np.arange(10, dtype=float)[:, None]
    y = np.where(X[:, 0] < 6, 1.0, 5.0)
    m = fit_tree(X, y, max_depth=1, min_samples=2)
    assert m.params["threshold"][0] == 5.5
    np.testing.assert_array_equal(predict(m, X), y)


def _oracle_split(X, y):
    """Plain-loop exhaustive split search with the same tie rule."""
    best = None
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f]))
        for lo, hi in zip(values, values[1:]):
            t = (lo + hi) / 2
            left, right = y[X[:, f] <= t], y[X[:, f] > t]
            g = (((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()) / len(y)
            if best is None or g < best[0] - 1e-12:
                best = (g, f, t)
    return best


def _oracle_tree(X, y, depth):
    if depth == 0 or len(y) < 2 or np.ptp(y) == 0:
        return ("leaf", y.mean())
    s = _oracle_split(X, y)
    if s is None:
        return ("leaf", y.mean())
    _, f, t = s
    go = X[:, f] <= t
    return (f, t, _oracle_tree(X[go], y[go], depth - 1), _oracle_tree(X[~go], y[~go], depth - 1))


def _as_tuple(node):
    if node.is_leaf:
        return ("leaf", node.value)
    return (node.feature, node.threshold, _as_tuple(node.left), _as_tuple(node.right))


def test_tree_matches_bruteforce_on_8_points():
    X = np.array([[1, 5], [2, 3], [3, 8], [4, 1], [5, 7], [6, 2], [7, 6], [8, 4]], float)
    y = np.array([1.0, 1.5, 4.0, 2.0, 8.0, 2.5, 9.0, 7.5])
    got = _as_tuple(grow(X, y, max_depth=2, min_samples=2))
    want = _oracle_tree(X, y, 2)

    def close(a, b):
        if a[0] == "leaf" or b[0] == "leaf":
            return a[0] == b[0] and a[1] == pytest.approx(b[1])
        return a[0] == b[0] and a[1] == b[1] and close(a[2], b[2]) and close(a[3], b[3])

    assert close(got, want)


def test_split_is_global_minimum_over_all_pairs():
    rng = np.random.default_rng(5)
    X, y = rng.integers(0, 5, size=(12, 3)).astype(float), rng.normal(size=12)
    g, f, t = best_split(X, y)
    assert g == pytest.approx(_oracle_split(X, y)[0])


def test_tree_leaf_values_are_node_means():
    rng = np.random.default_rng(6)
    X, y = rng.normal(size=(200, 3)), rng.normal(size=200)
    m = fit_tree(X, y, max_depth=4)
    pred = predict(m, X)
    for v in np.unique(pred):
        assert v == pytest.approx(y[pred == v].mean(), abs=1e-12)


def test_tree_piecewise_constant():
    rng = np.random.default_rng(7)
    X, y = rng.normal(size=(100, 2)), rng.normal(size=100)
    m = fit_tree(X, y, max_depth=3)
    thr = m.params["threshold"][np.isfinite(m.params["threshold"])]
    q = np.array([[0.0, 0.0]])
    gap = np.min(np.abs(thr)) if len(thr) else 1.0
    np.testing.assert_array_equal(predict(m, q), predict(m, q + 0.5 * gap))


def test_tree_cv_and_truncation_consistent():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(400, 2))
    y = np.sign(X[:, 0]) + 0.1 * rng.normal(size=400)
    m = fit_tree(X, y, CVConfig(folds=3, grid=(1, 2, 6)))
    assert m.params["max_depth"] in (1, 2, 6)
    assert m.params["depth"].max() <= m.params["max_depth"]


@pytest.mark.parametrize("fit", [fit_knn, fit_tree])
def test_fits_deterministic(fit):
    rng = np.random.default_rng(9)
    X, y = rng.normal(size=(120, 3)), rng.normal(size=120)
    a, b = fit(X, y, CVConfig(folds=3)), fit(X, y, CVConfig(folds=3))
    np.testing.assert_array_equal(predict(a, X), predict(b, X))
