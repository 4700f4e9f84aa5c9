import pytest
import yaml

FAST = {
    "methods": ["OLS", "Lasso", "Ridge", "KNN", "SVR", "DecisionTree", "ISOBaseline"],
    "min_train_rows": 500,
    "lambda_grid": [0.01, 1.0, 100.0],
    "knn_grid": [4, 16],
    "tree_depth_grid": [3, 5],
    "svr_C_grid": [1.0],
    "svr_gamma_grid": [0.01],
    "svr_epsilon_grid": [0.1],
    "svr_max_rows": 300,
    "cv_folds": 3,
    "kmeans_ks": [3, 6],
    "kmeans_restarts": 3,
    "percentile_k": 6,
    "n_bins": 2,
    "synth": {"n_users": 4, "n_days": 60, "mixture_levels": [0.0, 1.0]},
}


@pytest.fixture
def fast_config(tmp_path):
    """A small run-all configuration: 4 synthetic users, 60 days, every method."""
    path = tmp_path / "fast.yaml"
    path.write_text(yaml.safe_dump(FAST))
    return path


_acceptance_lines: list = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
