"""Per-user reduction estimates from counterfactual predictions.

Paired differences are always ``d = y_hat - y_dr`` (counterfactual minus
observed), so a positive shift means consumption dropped during DR hours.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

RESULT_COLUMNS = ("user_id", "method", "n_events", "delta_hat", "mpr", "wilcoxon_p",
                  "hl_shift", "bias")
EXACT_MAX_N = 25
MPR_FLOOR = 0.05


def _pair(y_dr, y_hat):
    y_dr = np.asarray(y_dr, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if len(y_dr) != len(y_hat):
        raise ValueError(f"length mismatch: {len(y_dr)} observed vs {len(y_hat)} predicted")
    if len(y_dr) == 0:
        raise ValueError("no DR observations")
    return y_dr, y_hat


def delta_hat(y_dr, y_hat) -> float:
    """Mean of ``y_hat - y_dr``; positive values are estimated reductions."""
    y_dr, y_hat = _pair(y_dr, y_hat)
    return float(np.mean(y_hat - y_dr))


def mpr(y_dr, y_hat, floor: float = MPR_FLOOR) -> tuple[float, bool]:
    """Mean percentage reduction ``mean((y_dr - y_hat) / |y_hat|) * 100``.

    Terms with ``|y_hat| < floor`` are left out.  Returns ``(mpr, diverged)``
    where ``diverged`` tells whether any term was left out; the value is NaN
    if every term was.
    """
    y_dr, y_hat = _pair(y_dr, y_hat)
    ok = np.abs(y_hat) >= floor
    if not ok.any():
        return math.nan, True
    terms = (y_dr[ok] - y_hat[ok]) / np.abs(y_hat[ok])
    return float(np.mean(terms) * 100.0), bool((~ok).any())


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float      # sum of signed ranks
    t_plus: float         # sum of ranks of positive differences
    n_effective: int
    p_value: float
    mode: str             # "exact" | "normal" | "degenerate"
    alternative: str = "greater"

    @property
    def p_one_sided(self) -> float:
        return self.p_value


def signed_ranks(d) -> tuple[np.ndarray, np.ndarray]:
    """Drop zeros; return (nonzero differences, midranks of their magnitudes)."""
    d = np.asarray(d, dtype=float).ravel()
    d = d[d != 0]
    return d, stats.rankdata(np.abs(d), method="average")


def exact_tail(ranks, t_plus: float) -> tuple[float, float]:
    """``(P(T+ >= t_plus), P(T+ <= t_plus))`` under random signs.

    Counts sign patterns by subset sums of the doubled (integer) midranks,
    which is the same as enumerating all ``2**n`` patterns.
    """
    r2 = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in r2:  # midranks are >= 1, so r >= 2
        counts[r:] = counts[r:] + counts[:-r]
    target = int(round(2 * t_plus))
    n_patterns = 2.0 ** len(r2)
    return counts[target:].sum() / n_patterns, counts[:target + 1].sum() / n_patterns


def normal_tail(ranks, t_plus: float) -> tuple[float, float]:
    """Normal approximation with tie-corrected variance and 0.5 continuity correction."""
    n = len(ranks)
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    sd = math.sqrt(var)
    upper = stats.norm.sf((t_plus - mu - 0.5) / sd)
    lower = stats.norm.cdf((t_plus - mu + 0.5) / sd)
    return float(upper), float(lower)


def wilcoxon_signed_rank(y_hat, y_dr, alternative: str = "greater",
                         mode: str = "auto") -> WilcoxonResult:
    """Wilcoxon signed-rank test on ``d = y_hat - y_dr``.

    ``alternative="greater"`` tests for a counterfactual shifted up (a
    reduction).  ``mode="auto"`` is exact for up to 25 nonzero differences and
    normal beyond.
    """
    if alternative not in ("greater", "less", "two-sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    y_dr, y_hat = _pair(y_dr, y_hat)
    d, ranks = signed_ranks(y_hat - y_dr)
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 0.0, 0, 1.0, "degenerate", alternative)
    t_plus = float(ranks[d > 0].sum())
    statistic = float(2 * t_plus - n * (n + 1) / 2.0)
    if mode == "auto":
        mode = "exact" if n <= EXACT_MAX_N else "normal"
    if mode == "exact":
        upper, lower = exact_tail(ranks, t_plus)
    elif mode == "normal":
        upper, lower = normal_tail(ranks, t_plus)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    p = {"greater": upper, "less": lower, "two-sided": 2 * min(upper, lower)}[alternative]
    return WilcoxonResult(statistic, t_plus, n, float(min(max(p, 0.0), 1.0)), mode, alternative)


def hodges_lehmann(y_hat, y_dr) -> float:
    """Median of the Walsh averages ``(d_i + d_j) / 2``, ``i <= j``, of ``d = y_hat - y_dr``."""
    y_dr, y_hat = _pair(y_dr, y_hat)
    d = y_hat - y_dr
    i, j = np.triu_indices(len(d))
    return float(np.median((d[i] + d[j]) / 2.0))


@dataclass(frozen=True)
class TreatmentEstimate:
    """Reduction statistics of one (user, method) pair in standardized units.

    Multiply ``delta_hat``, ``hl_shift`` and ``bias`` by ``scale`` for kWh.
    """

    user_id: str
    method: str
    n_events: int
    delta_hat: float
    mpr: float
    wilcoxon_p: float
    hl_shift: float
    bias: float
    mpr_diverged: bool = False
    scale: float = 1.0

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in RESULT_COLUMNS}

    @property
    def delta_hat_kwh(self) -> float:
        return self.delta_hat * self.scale

    @property
    def hl_shift_kwh(self) -> float:
        return self.hl_shift * self.scale


def estimate(user_id: str, method: str, y_dr, y_hat, *, bias: float = 0.0,
             scale: float = 1.0, alternative: str = "greater",
             mpr_floor: float = MPR_FLOOR) -> TreatmentEstimate:
    y_dr, y_hat = _pair(y_dr, y_hat)
    ok = np.isfinite(y_hat)
    if not ok.all():
        y_dr, y_hat = y_dr[ok], y_hat[ok]
        if len(y_dr) == 0:
            raise ValueError(f"{method}: no DR hour has a prediction")
    m, diverged = mpr(y_dr, y_hat, mpr_floor)
    return TreatmentEstimate(
        user_id, method, len(y_dr), delta_hat(y_dr, y_hat), m,
        wilcoxon_signed_rank(y_hat, y_dr, alternative).p_value,
        hodges_lehmann(y_hat, y_dr), float(bias), diverged, float(scale))


def estimate_user(fs, model, *, alternative: str = "greater",
                  mpr_floor: float = MPR_FLOOR) -> TreatmentEstimate:
    """Predict the DR rows of ``fs`` with ``model`` and summarize the shift."""
    from .forecast import predict

    y_hat = predict(model, fs.X1, schema_hash=fs.schema_hash)
    bias = float(np.mean(fs.Y0 - predict(model, fs.X0)))
    return estimate(fs.user_id, model.method, fs.Y1, y_hat, bias=bias,
                    scale=fs.cons_params.std, alternative=alternative, mpr_floor=mpr_floor)


def write_results(estimates, path) -> None:
    frame = pd.DataFrame([e.row() for e in estimates], columns=list(RESULT_COLUMNS))
    frame = frame.sort_values(["user_id", "method"], kind="stable")
    frame.to_csv(path, index=False, float_format="%.12g")


def read_results(path) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"user_id": str})
    missing = [c for c in RESULT_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return frame
