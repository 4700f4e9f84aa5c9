"""Run configuration.

A config file is a flat YAML mapping whose keys are the field names of
:class:`Config`; the optional ``synth`` key holds a nested mapping with the
fields of :class:`drtarget.synth.SynthConfig` plus ``n_users`` and
``mixture_levels`` for population generation.  Unknown keys are an error.
Every default below is the documented default of the pipeline.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .forecast.base import log_grid


@dataclass
class Config:
    # ingest
    timezone: str | None = None          # convert offset-carrying timestamps to this zone
    strict: bool = False                 # reject unknown CSV columns
    max_kwh: float = 50.0                # readings above this mark the user corrupt
    temperature_max_gap_hours: int = 3
    # prep
    spillover_hours: int = 8
    min_train_rows: int = 1000
    min_dr_rows: int = 10
    adf_max_lag: int = 24
    # forecast
    methods: list = field(default_factory=lambda: [
        "OLS", "Lasso", "Ridge", "KNN", "SVR", "DecisionTree", "ISOBaseline"])
    cv_folds: int = 5
    lambda_grid: list = field(default_factory=lambda: list(log_grid(1e-4, 1e2, 10)))
    knn_grid: list = field(default_factory=lambda: [2, 4, 8, 16, 32, 64, 128])
    tree_depth_grid: list = field(default_factory=lambda: list(range(3, 13)))
    tree_min_samples: int = 5
    svr_C_grid: list = field(default_factory=lambda: [0.1, 1.0, 10.0])
    svr_gamma_grid: list = field(default_factory=lambda: [0.01, 0.1, 1.0])
    svr_epsilon_grid: list = field(default_factory=lambda: [0.05, 0.1])
    svr_max_rows: int | None = 5000
    svr_tol: float = 1e-3
    lasso_tol: float = 1e-7
    lasso_max_sweeps: int = 100_000
    holidays: list = field(default_factory=list)   # ISO baseline holiday dates
    iso_weekdays: int = 10
    iso_weekend_days: int = 4
    # effects
    alternative: str = "greater"
    mpr_floor: float = 0.05
    # report
    mape_floor_kwh: float = 0.01
    mape_holdout_fraction: float = 0.2
    significance_levels: list = field(default_factory=lambda: [0.95, 0.90, 0.80])
    n_bins: int = 10
    # segment
    kmeans_ks: list = field(default_factory=lambda: [6, 12, 20])
    kmeans_restarts: int = 10
    shape_window: int = 5
    hourly_std_raw: bool = False
    percentile_k: int = 20
    # general
    seed: int = 0
    jobs: int = 1
    synth: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "Config":
        data = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 of the settings that affect results (``jobs`` does not)."""
        d = self.to_dict()
        d.pop("jobs")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def svr_grid(self) -> tuple:
        return tuple((c, g, e) for c in self.svr_C_grid for g in self.svr_gamma_grid
                     for e in self.svr_epsilon_grid)
