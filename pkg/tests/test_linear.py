import numpy as np
import pytest

from drtarget.forecast import (CVConfig, fit_lasso, fit_ols, fit_ridge, predict,
                               time_block_splits)
from drtarget.forecast.linear import lasso_beta, ridge_beta, soft_threshold


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 8))
    beta = rng.normal(size=8)
    return X, X @ beta + 0.1 * rng.normal(size=200), beta


def test_ols_identity():
    y = np.array([1.0, -2.0, 3.5])
    np.testing.assert_allclose(fit_ols(np.eye(3), y).params["beta"], y)


def test_ols_noiseless_recovery(data):
    X, _, beta = data
    np.testing.assert_allclose(fit_ols(X, X @ beta).params["beta"], beta, atol=1e-8)


def test_ols_normal_equations(data):
    X, y, _ = data
    b = fit_ols(X, y).params["beta"]
    assert np.abs(X.T @ (y - X @ b)).max() < 1e-8


def test_ols_predict_is_xbeta(data):
    X, y, _ = data
    m = fit_ols(X, y)
    np.testing.assert_array_equal(predict(m, X), X @ m.params["beta"])


def test_ridge_zero_is_ols(data):
    X, y, _ = data
    np.testing.assert_allclose(fit_ridge(X, y, lam=0.0).params["beta"],
                               fit_ols(X, y).params["beta"], atol=1e-8)


def test_ridge_identity_closed_form():
    y = np.array([2.0, -4.0, 6.0])
    np.testing.assert_allclose(ridge_beta(np.eye(3), y, 1.0), y / 2)


def test_ridge_shrinks_monotonically(data):
    X, y, _ = data
    norms = [np.linalg.norm(ridge_beta(X, y, lam)) for lam in np.logspace(-4, 4, 20)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 0.1 * norms[0]


def test_ridge_path_continuous(data):
    X, y, _ = data
    p0 = X @ ridge_beta(X, y, 1.0)
    p1 = X @ ridge_beta(X, y, 1.0 + 1e-8)
    assert np.abs(p0 - p1).max() < 1e-6


def test_ridge_rank_deficient_zero_lambda_is_min_norm():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 3))
    X = np.hstack([X, X[:, :1]])          # duplicate column
    y = rng.normal(size=50)
    np.testing.assert_allclose(ridge_beta(X, y, 0.0), np.linalg.pinv(X) @ y, atol=1e-10)


def test_lasso_zero_is_ols(data):
    X, y, _ = data
    np.testing.assert_allclose(fit_lasso(X, y, lam=0.0).params["beta"],
                               fit_ols(X, y).params["beta"], atol=1e-5)


def test_lasso_deactivation_bound(data):
    X, y, _ = data
    lam = np.abs(X.T @ y).max()
    assert np.all(fit_lasso(X, y, lam=lam).params["beta"] == 0.0)
    assert np.any(fit_lasso(X, y, lam=0.99 * lam).params["beta"] != 0.0)


def test_lasso_orthonormal_closed_form():
    rng = np.random.default_rng(4)
    Q, _ = np.linalg.qr(rng.normal(size=(30, 6)))
    y = rng.normal(size=30)
    lam = 0.3
    # objective 0.5*||y - Xb||^2 + lam*||b||_1  =>  b = S(X'y, lam)
    np.testing.assert_allclose(lasso_beta(Q, y, lam, tol=1e-12), soft_threshold(Q.T @ y, lam),
                               atol=1e-10)


def test_lasso_sparsity_monotone(data):
    X, y, _ = data
    counts = [np.count_nonzero(lasso_beta(X, y, lam)) for lam in np.logspace(-2, 3, 15)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_time_block_splits_forward():
    for tr, va in time_block_splits(103, 5):
        assert tr.max() < va.min() and tr[0] == 0
        assert np.array_equal(va, np.arange(va[0], va[-1] + 1))


def test_cv_picks_small_penalty_for_clean_signal(data):
    X, y, _ = data
    m = fit_ridge(X, y, CVConfig(folds=4, grid=(1e-3, 1e3)))
    assert m.params["lambda"] == 1e-3
    assert m.cv_record.chosen == 1e-3 and len(m.cv_record.fold_scores) == 4


def test_fit_deterministic(data):
    X, y, _ = data
    a, b = fit_lasso(X, y, CVConfig(folds=3)), fit_lasso(X, y, CVConfig(folds=3))
    np.testing.assert_array_equal(a.params["beta"], b.params["beta"])


def test_model_save_load(tmp_path, data):
    from drtarget.forecast import ForecastModel

    X, y, _ = data
    m = fit_ridge(X, y, CVConfig(folds=3), schema_hash="abc")
    m.save(tmp_path / "m.json")
    back = ForecastModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(predict(back, X), predict(m, X))
    assert back.schema_hash == "abc" and back.cv_record.chosen == m.cv_record.chosen


def test_schema_mismatch(data):
    from drtarget.forecast import SchemaMismatch

    X, y, _ = data
    m = fit_ols(X, y, schema_hash="abc")
    with pytest.raises(SchemaMismatch):
        predict(m, X[:, :3])
    with pytest.raises(SchemaMismatch):
        predict(m, X, schema_hash="other")


def test_model_params_read_only(data):
    X, y, _ = data
    m = fit_ols(X, y)
    with pytest.raises(ValueError):
        m.params["beta"][0] = 1.0
