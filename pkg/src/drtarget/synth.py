"""Synthetic consumption with known demand-response reductions.

Hourly consumption is a daily dictionary shape plus a linear temperature
term, Gaussian noise and a constant reduction on DR hours::

    l(t) = C_i(t) + c_t * T(t) - 1[t in D] * c_dr + eps(t)

All amounts are kWh.  The dictionary shapes are scaled so the hourly
standard deviation of a typical series is close to 1 kWh, which makes
``sigma`` and ``c_dr`` roughly comparable to standardized units.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import yaml

from .config import Config
from .ingest import DREvent
from .segment import daily_load_shapes, entropy, kmeans

logger = logging.getLogger(__name__)

N_SHAPES = 12
BASE_KWH = 2.0
MAX_CLIP_RATE = 1e-3
MIXTURE_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)
SIGMA_GRID = (0.05, 0.2, 0.5)

# (archetype, [(peak hour, width in hours, height in kWh), ...])
_BUMPS = [
    ("morning+evening", [(7, 1.5, 3.0), (19, 2.0, 3.0)]),
    ("morning+evening", [(6, 1.0, 2.5), (18, 1.5, 3.5)]),
    ("morning+evening", [(8, 2.0, 3.5), (20, 1.5, 2.5)]),
    ("morning+evening", [(7, 1.0, 2.0), (21, 2.0, 4.0)]),
    ("morning+evening", [(9, 1.5, 3.0), (17, 1.0, 3.0)]),
    ("morning+evening", [(6, 2.0, 3.5), (22, 1.0, 3.0)]),
    ("daytime", [(13, 3.0, 3.5)]),
    ("daytime", [(11, 2.0, 3.0), (15, 2.0, 3.0)]),
    ("night", [(1, 2.0, 3.5)]),
    ("night", [(23, 1.5, 3.0), (3, 1.5, 2.5)]),
    ("evening", [(18, 2.5, 4.0)]),
    ("evening", [(21, 1.5, 4.5)]),
]


def dictionary_shapes() -> np.ndarray:
    """The 12 stylized daily profiles in kWh, shape ``(12, 24)``."""
    hours = np.arange(24)
    out = np.full((len(_BUMPS), 24), BASE_KWH)
    for i, (_, bumps) in enumerate(_BUMPS):
        for peak, width, height in bumps:
            dist = np.abs(hours - peak)
            dist = np.minimum(dist, 24 - dist)   # wrap around midnight
            out[i] += height * np.exp(-0.5 * (dist / width) ** 2)
    return out


def archetypes() -> list[str]:
    return [name for name, _ in _BUMPS]


def mixture(level: float, primary: int = 0, k: int = N_SHAPES) -> np.ndarray:
    """``(1 - level) * e_primary + level * uniform``."""
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"mixture level must lie in [0, 1], got {level}")
    w = np.full(k, level / k)
    w[primary] += 1.0 - level
    return w


def weight_entropy(weights) -> float:
    p = np.asarray(weights, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


@dataclass
class SynthConfig:
    """Generator settings.

    ``temperature_model`` holds ``mean``, ``seasonal_amp``, ``daily_amp``,
    ``daily_peak_hour`` and ``noise`` in degrees C.  ``min_event_gap`` is the
    minimum spacing in hours between DR hours, so the spillover window and
    the lag covariates of one event never touch another.
    """

    dictionary: list | None = None          # k x 24 kWh profiles; None = built-in 12
    mixture_weights: list | None = None     # None = uniform
    c_t: float = 0.05
    temperature_model: dict = field(default_factory=lambda: {
        "mean": 15.0, "seasonal_amp": 8.0, "daily_amp": 5.0, "daily_peak_hour": 15,
        "noise": 0.5})
    sigma: float = 0.2
    c_dr: float = 0.5
    dr_fraction: float = 0.01
    n_days: int = 365
    seed: int = 0
    start: str = "2019-01-01"
    min_event_gap: int = 13

    def __post_init__(self):
        if self.c_dr < 0:
            raise ValueError(f"c_dr must be >= 0, got {self.c_dr}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 <= self.dr_fraction < 1:
            raise ValueError(f"dr_fraction must lie in [0, 1), got {self.dr_fraction}")
        if self.n_days < 2:
            raise ValueError("n_days must be at least 2")
        k = len(self.shapes())
        if self.mixture_weights is not None:
            w = np.asarray(self.mixture_weights, dtype=float)
            if len(w) != k or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"mixture_weights must be {k} non-negative values summing to 1")

    def shapes(self) -> np.ndarray:
        if self.dictionary is None:
            return dictionary_shapes()
        d = np.asarray(self.dictionary, dtype=float)
        if d.ndim != 2 or d.shape[1] != 24:
            raise ValueError("dictionary must be a k x 24 table")
        return d

    def weights(self) -> np.ndarray:
        k = len(self.shapes())
        if self.mixture_weights is None:
            return np.full(k, 1.0 / k)
        return np.asarray(self.mixture_weights, dtype=float)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown synth keys: {unknown}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()) or {})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GroundTruth:
    """Everything needed to reconstruct the generated series.

    ``components`` has columns ``base``, ``temp_term``, ``noise``, ``dr_term``
    and ``clipped``; ``consumption = base + temp_term + noise - dr_term``
    wherever ``clipped`` is False.
    """

    dr_hours: pd.DatetimeIndex
    true_reduction: float
    true_mpr: float
    base_assignments: pd.Series
    components: pd.DataFrame
    n_clipped: int = 0


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def hour_index(cfg: SynthConfig) -> pd.DatetimeIndex:
    return pd.date_range(pd.Timestamp(cfg.start), periods=24 * cfg.n_days, freq="h")


def temperature(cfg: SynthConfig) -> pd.Series:
    """Seasonal plus daily sinusoid with a little Gaussian noise."""
    idx = hour_index(cfg)
    m = cfg.temperature_model
    doy = idx.dayofyear.to_numpy() - 1
    hod = idx.hour.to_numpy()
    seasonal = -m["seasonal_amp"] * np.cos(2 * np.pi * doy / 365.25)
    daily = m["daily_amp"] * np.cos(2 * np.pi * (hod - m["daily_peak_hour"]) / 24)
    noise = _rng(cfg.seed, 1).normal(0.0, m["noise"], len(idx))
    return pd.Series(m["mean"] + seasonal + daily + noise, index=idx, name="temp_c")


def sample_dr_hours(cfg: SynthConfig, idx: pd.DatetimeIndex) -> pd.DatetimeIndex:
    """Random DR hours at least ``min_event_gap`` apart, none on the first day."""
    n_target = int(round(cfg.dr_fraction * len(idx)))
    if n_target == 0:
        return pd.DatetimeIndex([])
    rng = _rng(cfg.seed, 2)
    taken = np.zeros(len(idx), dtype=bool)
    blocked = np.zeros(len(idx), dtype=bool)
    blocked[:24] = True
    gap = cfg.min_event_gap
    count = 0
    for pos in rng.permutation(len(idx)):
        if blocked[pos]:
            continue
        taken[pos] = True
        blocked[max(0, pos - gap):pos + gap + 1] = True
        count += 1
        if count == n_target:
            break
    if count < n_target:
        raise ValueError(f"cannot place {n_target} DR hours {gap}h apart in {cfg.n_days} days")
    return idx[taken]


def generate(cfg: SynthConfig, temp: pd.Series | None = None, user_id: str = "synth"):
    """Generate one user's consumption.

    Returns ``(consumption, temperature, events, truth)``.  A shared
    ``temp`` series may be passed for population runs.
    """
    idx = hour_index(cfg)
    temp = temperature(cfg) if temp is None else temp.reindex(idx)
    shapes = cfg.shapes()
    rng = _rng(cfg.seed, 3)
    assign = rng.choice(len(shapes), size=cfg.n_days, p=cfg.weights())
    base = shapes[assign].ravel()
    temp_term = cfg.c_t * temp.to_numpy()
    noise = rng.normal(0.0, cfg.sigma, len(idx)) if cfg.sigma > 0 else np.zeros(len(idx))
    dr_hours = sample_dr_hours(cfg, idx)
    dr = idx.isin(dr_hours)
    dr_term = np.where(dr, cfg.c_dr, 0.0)

    raw = base + temp_term + noise - dr_term
    clipped = raw < 0
    n_clipped = int(clipped.sum())
    if n_clipped:
        logger.info("clipped %d of %d hours at 0", n_clipped, len(raw))
    if n_clipped / len(raw) >= MAX_CLIP_RATE:
        raise ValueError(f"clip rate {n_clipped / len(raw):.4%} reaches the "
                         f"{MAX_CLIP_RATE:.1%} limit; lower sigma or c_dr")
    cons = pd.Series(np.maximum(raw, 0.0), index=idx, name="kwh")

    counterfactual = (base + temp_term + noise)[dr]
    with np.errstate(divide="ignore", invalid="ignore"):
        true_mpr = float(np.mean(-cfg.c_dr / np.abs(counterfactual)) * 100) if dr.any() else math.nan

    components = pd.DataFrame({"base": base, "temp_term": temp_term, "noise": noise,
                               "dr_term": dr_term, "clipped": clipped}, index=idx)
    days = pd.date_range(idx[0], periods=cfg.n_days, freq="D")
    truth = GroundTruth(dr_hours, float(cfg.c_dr), true_mpr,
                        pd.Series(assign, index=days, name="shape"), components, n_clipped)
    events = [DREvent(user_id, t, 1) for t in dr_hours]
    return cons, temp, events, truth


@dataclass
class Population:
    consumption: dict
    temperature: pd.Series
    events: dict
    truths: dict
    levels: dict   # user_id -> mixture level


def generate_population(cfg: SynthConfig, n_users: int,
                        mixture_levels: Sequence[float] = MIXTURE_LEVELS,
                        c_dr_by_user: dict | None = None) -> Population:
    """Users share one temperature series; user ``i`` has mixture level
    ``mixture_levels[i % len]`` around dictionary shape ``i % k``."""
    temp = temperature(cfg)
    k = len(cfg.shapes())
    cons, events, truths, levels = {}, {}, {}, {}
    for i in range(n_users):
        uid = f"u{i:04d}"
        level = float(mixture_levels[i % len(mixture_levels)])
        c_dr = cfg.c_dr if c_dr_by_user is None else c_dr_by_user.get(uid, cfg.c_dr)
        ucfg = replace(cfg, mixture_weights=list(mixture(level, i % k, k)),
                       seed=cfg.seed * 100_003 + i + 1, c_dr=c_dr)
        c, _, ev, truth = generate(ucfg, temp, uid)
        cons[uid], events[uid], truths[uid], levels[uid] = c, ev, truth, level
    return Population(cons, temp, events, truths, levels)


def write_population(pop: Population, out_dir) -> dict:
    """Write ingest-format CSVs; returns the paths by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = "%Y-%m-%dT%H:%M:%S"
    meter = pd.concat([pd.DataFrame({"user_id": u, "timestamp": s.index.strftime(fmt),
                                     "kwh": s.to_numpy()}) for u, s in pop.consumption.items()])
    temp = pd.DataFrame({"timestamp": pop.temperature.index.strftime(fmt),
                         "temp_c": pop.temperature.to_numpy()})
    events = pd.DataFrame([{"user_id": e.user_id, "start": e.start.strftime(fmt),
                            "duration_hours": e.duration_hours}
                           for u in pop.events for e in pop.events[u]],
                          columns=["user_id", "start", "duration_hours"])
    flags = pd.DataFrame({"user_id": list(pop.consumption), "has_solar": False})
    truth = pd.DataFrame([{"user_id": u, "mixture_level": pop.levels[u],
                           "true_reduction": t.true_reduction, "true_mpr": t.true_mpr,
                           "n_clipped": t.n_clipped} for u, t in pop.truths.items()])
    paths = {"meter": out / "meter.csv", "temperature": out / "temperature.csv",
             "events": out / "events.csv", "flags": out / "flags.csv",
             "truth": out / "truth.csv"}
    for key, frame in [("meter", meter), ("temperature", temp), ("events", events),
                       ("flags", flags), ("truth", truth)]:
        frame.to_csv(paths[key], index=False, float_format="%.10g")
    return paths


RECOVERY_COLUMNS = ["seed", "sigma", "mixture_level", "design_entropy", "entropy", "method",
                    "true_mpr", "mpr", "mpr_err", "delta_hat", "delta_err", "hl_shift",
                    "hl_err", "wilcoxon_p", "mape"]


def measured_entropy(cons_by_user: dict, reference: pd.Series, k: int = N_SHAPES,
                     seed: int = 0) -> dict:
    """Entropy of each user's daily weekday shapes over a k-means dictionary
    fit on the daily shapes of ``reference``.

    A reference drawn from the uniform mixture gives each dictionary shape
    about the same weight, so k-means recovers one cluster per shape instead
    of splitting whichever shape dominates the pool.
    """
    _, ref_shapes = daily_load_shapes(reference)
    model = kmeans(ref_shapes, k, seed)
    out = {}
    for user, cons in cons_by_user.items():
        _, shapes = daily_load_shapes(cons)
        out[user] = entropy(model.assign(shapes), k) if len(shapes) else math.nan
    return out


def recovery_experiment(base: SynthConfig, *, sigmas: Sequence[float] = SIGMA_GRID,
                        mixture_levels: Sequence[float] = MIXTURE_LEVELS,
                        seeds: Sequence[int] = range(6), methods: Sequence[str] = ("Ridge",),
                        run_cfg: Config | None = None, measure_entropy: bool = True) -> pd.DataFrame:
    """Generate, forecast and estimate on a grid of noise levels, mixtures and seeds.

    Within a seed every cell shares the same random draws (paired seeds), so
    sweeps over sigma or mixture change only that factor.  Errors are
    ``actual - predicted``; ``delta_*`` and ``hl_*`` are kWh, MPR in percent
    computed on kWh values.
    """
    from .pipeline import run_user

    run_cfg = run_cfg or Config()
    rows = []
    for seed in seeds:
        for sigma in sigmas:
            cells = {}
            for level in mixture_levels:
                cfg = replace(base, sigma=float(sigma), seed=int(seed),
                              mixture_weights=list(mixture(level, 0, len(base.shapes()))))
                cells[f"m{level:.4f}"] = (level, cfg, generate(cfg))
            ent = {}
            if measure_entropy:
                ref_cfg = replace(base, sigma=float(sigma), seed=int(seed) + 1_000_003,
                                  mixture_weights=None)
                ent = measured_entropy({u: c[2][0] for u, c in cells.items()},
                                       generate(ref_cfg)[0], seed=int(seed))
            for uid, (level, cfg, (cons, temp, events, truth)) in cells.items():
                run = run_user(uid, cons, temp, events, run_cfg, methods)
                fs = run.features
                for est, pred in zip(run.estimates, run.predictions):
                    y = fs.cons_params.inverse(pred["y"].to_numpy())
                    y_hat = fs.cons_params.inverse(pred["y_hat"].to_numpy())
                    ok = np.isfinite(y_hat)
                    mpr = float(np.mean((y[ok] - y_hat[ok]) / np.abs(y_hat[ok])) * 100)
                    rows.append({
                        "seed": int(seed), "sigma": float(sigma), "mixture_level": level,
                        "design_entropy": weight_entropy(cfg.weights()),
                        "entropy": ent.get(uid, math.nan), "method": est.method,
                        "true_mpr": truth.true_mpr, "mpr": mpr,
                        "mpr_err": truth.true_mpr - mpr,
                        "delta_hat": est.delta_hat_kwh,
                        "delta_err": truth.true_reduction - est.delta_hat_kwh,
                        "hl_shift": est.hl_shift_kwh,
                        "hl_err": truth.true_reduction - est.hl_shift_kwh,
                        "wilcoxon_p": est.wilcoxon_p, "mape": run.mape[est.method]})
    return pd.DataFrame(rows, columns=RECOVERY_COLUMNS)
