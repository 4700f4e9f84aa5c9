import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from drtarget.effects import (delta_hat, estimate, estimate_user, hodges_lehmann, mpr,
                              read_results, wilcoxon_signed_rank, write_results)


def enumerate_p(d):
    """P(T+ >= observed) by listing all 2**n sign patterns of the midranks."""
    d = np.asarray(d, float)
    d = d[d != 0]
    r = stats.rankdata(np.abs(d))
    t_obs = r[d > 0].sum()
    hits = sum(1 for signs in itertools.product((0, 1), repeat=len(d))
               if np.dot(signs, r) >= t_obs - 1e-9)
    return hits / 2 ** len(d)


def walsh_median(d):
    d = list(d)
    avgs = [(d[i] + d[j]) / 2 for i in range(len(d)) for j in range(i, len(d))]
    return float(np.median(avgs))


def test_delta_hat_examples():
    assert delta_hat([1, 2, 3], [1, 2, 3]) == 0
    assert delta_hat([1, 1], [2, 2]) == 1.0


def test_delta_hat_linearity():
    rng = np.random.default_rng(0)
    y, yh = rng.normal(size=50), rng.normal(size=50)
    a, c = 2.5, -1.3
    assert delta_hat(a * y + c, a * yh + c) == pytest.approx(a * delta_hat(y, yh))


def test_mpr_examples():
    assert mpr([1, 2], [1, 2])[0] == 0
    assert mpr(0.9 * np.array([1.0, 2.0, 4.0]), [1.0, 2.0, 4.0])[0] == pytest.approx(-10.0)
    value, _ = mpr([1.1, -2.2], [1.0, -2.0])
    scalar = ((1.1 - 1.0) / 1.0 + (-2.2 + 2.0) / 2.0) / 2 * 100
    assert value == pytest.approx(scalar, abs=1e-12) and value == pytest.approx(0.0, abs=1e-12)


def test_mpr_floor_flags_divergence():
    value, diverged = mpr([1.0, 1.0], [0.01, 2.0])
    assert diverged and value == pytest.approx(-50.0)
    value, diverged = mpr([1.0], [0.0])
    assert diverged and np.isnan(value)


def test_wilcoxon_all_positive_n5():
    r = wilcoxon_signed_rank(np.arange(1, 6.0), np.zeros(5))
    assert r.p_value == 1 / 32 and r.mode == "exact"


def test_wilcoxon_symmetric_pair():
    assert wilcoxon_signed_rank([1.0, -1.0], [0.0, 0.0]).p_value == 0.75


def test_wilcoxon_zeros_dropped_and_degenerate():
    r = wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])
    assert r.p_value == 1.0 and r.n_effective == 0
    r = wilcoxon_signed_rank([1, 5, 3], [1, 2, 3])
    assert r.n_effective == 1 and r.p_value == 0.5


@pytest.mark.parametrize("n", range(1, 13))
def test_wilcoxon_exact_matches_enumeration(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        d = np.round(rng.normal(0.3, 1, n), 1)    # rounding creates ties and zeros
        assert wilcoxon_signed_rank(d, np.zeros(n), mode="exact").p_value == \
            pytest.approx(enumerate_p(d), abs=1e-12)


def test_wilcoxon_matches_scipy_exact():
    rng = np.random.default_rng(11)
    d = rng.normal(0.2, 1, 15)
    ref = stats.wilcoxon(d, alternative="greater", method="exact").pvalue
    assert wilcoxon_signed_rank(d, np.zeros(15)).p_value == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("n", range(5, 13))
def test_wilcoxon_normal_close_to_exact(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(200):
        d = rng.normal(0.3, 1, n)
        e = wilcoxon_signed_rank(d, np.zeros(n), mode="exact").p_value
        a = wilcoxon_signed_rank(d, np.zeros(n), mode="normal").p_value
        assert abs(e - a) < 0.02


def test_wilcoxon_normal_n20_within_001():
    rng = np.random.default_rng(20)
    for _ in range(200):
        d = rng.normal(0.3, 1, 20)
        e = wilcoxon_signed_rank(d, np.zeros(20), mode="exact").p_value
        a = wilcoxon_signed_rank(d, np.zeros(20), mode="normal").p_value
        assert abs(e - a) < 0.01


def test_wilcoxon_direction():
    rng = np.random.default_rng(5)
    y = rng.normal(size=40)
    base = wilcoxon_signed_rank(y + rng.normal(0, 0.1, 40), y).p_value
    assert wilcoxon_signed_rank(y + 0.5, y).p_value < base     # reduction: y_hat above y_dr
    assert wilcoxon_signed_rank(y - 0.5, y).p_value > 0.99


def test_wilcoxon_two_sided_and_less():
    d = np.arange(1, 6.0)
    assert wilcoxon_signed_rank(d, np.zeros(5), "two-sided").p_value == 2 / 32
    assert wilcoxon_signed_rank(d, np.zeros(5), "less").p_value == 1.0


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=30),
       st.floats(0.01, 100))
@settings(max_examples=80, deadline=None)
def test_wilcoxon_scale_invariant(d, a):
    d = np.array(d)
    p1 = wilcoxon_signed_rank(d, np.zeros_like(d)).p_value
    p2 = wilcoxon_signed_rank(a * d, np.zeros_like(d)).p_value
    same_ranks = np.array_equal(stats.rankdata(np.abs(d)), stats.rankdata(np.abs(a * d)))
    if np.all((a * d != 0) == (d != 0)) and same_ranks:
        assert p1 == pytest.approx(p2, abs=1e-12)
    assert 0 < p1 <= 1


def test_hl_examples():
    assert hodges_lehmann([2.0, 2.0, 2.0], [0, 0, 0]) == 2.0
    assert hodges_lehmann([1.0, 3.0], [0, 0]) == 2.0
    assert hodges_lehmann([1.0, 2.0, 10.0], [0, 0, 0]) == 3.75


@pytest.mark.parametrize("n", [1, 2, 3, 7, 50, 200])
def test_hl_matches_walsh_enumeration(n):
    rng = np.random.default_rng(n)
    yh, y = rng.normal(size=n), rng.normal(size=n)
    assert hodges_lehmann(yh, y) == walsh_median(yh - y)


def test_hl_recovers_shift():
    # the standard error at n = 1000, sigma = 1 is about 0.032, so check the typical error
    errs = [abs(hodges_lehmann(0.8 + np.random.default_rng(s).normal(0, 1, 1000), np.zeros(1000))
                - 0.8) for s in range(20)]
    assert np.median(errs) < 0.05
    small = [abs(hodges_lehmann(0.8 + np.random.default_rng(s).normal(0, 1, 30), np.zeros(30))
                 - 0.8) for s in range(20)]
    assert np.median(errs) < np.median(small)


def test_estimate_oracle_model():
    y = np.array([0.5, -0.2, 1.3])
    e = estimate("u", "Oracle", y, y)
    assert e.delta_hat == 0 and e.wilcoxon_p == 1.0 and e.hl_shift == 0


def test_estimate_drops_nan_predictions():
    e = estimate("u", "X", [1.0, 2.0, 3.0], [2.0, np.nan, 4.0])
    assert e.n_events == 2 and e.delta_hat == 1.0


def test_results_roundtrip(tmp_path):
    es = [estimate("b", "OLS", [1.0, 2.0], [1.5, 2.5]), estimate("a", "OLS", [1.0], [2.0])]
    write_results(es, tmp_path / "r.csv")
    frame = read_results(tmp_path / "r.csv")
    assert frame["user_id"].tolist() == ["a", "b"]
    assert list(frame.columns) == ["user_id", "method", "n_events", "delta_hat", "mpr",
                                   "wilcoxon_p", "hl_shift", "bias"]


def test_estimate_user_synthetic_recovery():
    from drtarget.forecast import CVConfig, fit_ols, fit_ridge
    from drtarget.pipeline import prepare_user
    from drtarget.config import Config
    from drtarget.synth import SynthConfig, generate

    cons, temp, events, truth = generate(SynthConfig(sigma=0.2, c_dr=0.5, seed=3))
    _, fs, _ = prepare_user("s", cons, temp, events, Config())
    for model in (fit_ols(fs.X0, fs.Y0), fit_ridge(fs.X0, fs.Y0, CVConfig())):
        e = estimate_user(fs, model)
        assert abs(e.hl_shift_kwh - 0.5) < 0.15
        assert e.wilcoxon_p < 0.01
        assert estimate_user(fs, model) == e
