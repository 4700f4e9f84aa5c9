"""Command-line interface.

Every stage reads and writes fixed file names below ``--out-dir``::

    ingest/    consumption.csv temperature.csv events.csv users.csv rejected_rows.csv
    prep/      features/<user>.csv prep_log.csv
    forecast/  models/<user>__<method>.json predictions.csv mape.csv
    effects/   results.csv
    segment/   scores.csv centroids_k<k>.csv excluded.csv
    report/    summary.csv outliers.csv rejection.csv
    synth/     meter.csv temperature.csv events.csv flags.csv truth.csv [recovery.csv]
    manifest.json

Outputs depend only on the inputs, the config and the seed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, ingest
from .config import Config
from .effects import estimate, read_results, write_results
from .ingest import DREvent
from .pipeline import prepare_user, run_features
from .prep import FeatureSet, InsufficientDataError
from .report import distribution_summary, rejection_tables
from .segment import centroid_frame, segment_population

logger = logging.getLogger("drtarget")

TIME_FORMAT = "%Y-%m-%dT%H:%M:%S"
FLOAT_FORMAT = "%.12g"
SUMMARY_METRICS = ("mape", "delta_hat", "hl_shift", "mpr")


# ---------------------------------------------------------------- helpers

def _write(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, date_format=TIME_FORMAT)
    return path


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_consumption(path: Path) -> dict[str, pd.Series]:
    frame = pd.read_csv(path, dtype={"user_id": str}, parse_dates=["timestamp"])
    out = {}
    for user, grp in frame.groupby("user_id", sort=True):
        s = pd.Series(grp["kwh"].to_numpy(float), index=pd.DatetimeIndex(grp["timestamp"]),
                      name=user)
        out[user] = ingest.to_hourly(s)
    return out


def _read_temperature(path: Path) -> pd.Series:
    frame = pd.read_csv(path, parse_dates=["timestamp"])
    return pd.Series(frame["temp_c"].to_numpy(float), index=pd.DatetimeIndex(frame["timestamp"]),
                     name="temp_c")


def _read_events(path: Path) -> dict[str, list[DREvent]]:
    return ingest.load_events_csv(path)


def _stage(out: Path, name: str) -> Path:
    d = out / name
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------- stages

def stage_ingest(cfg: Config, out: Path, meter, temperature, events, flags) -> None:
    d = _stage(out, "ingest")
    data = ingest.load_meter_csv(meter, tz=cfg.timezone, max_kwh=cfg.max_kwh, strict=cfg.strict)
    temp_obs = ingest.load_temperature_csv(temperature, tz=cfg.timezone, strict=cfg.strict)
    temp = ingest.resample_temperature(temp_obs, max_gap_hours=cfg.temperature_max_gap_hours)
    ev = ingest.load_events_csv(events, tz=cfg.timezone, strict=cfg.strict)
    fl = ingest.mark_corrupt(ingest.load_flags_csv(flags, strict=cfg.strict), data.corrupt)
    kept, log = ingest.filter_users(fl, data.readings)

    rows = [pd.DataFrame({"user_id": u, "timestamp": s.index, "kwh": s.to_numpy()})
            for u, s in kept.items()]
    cons = pd.concat(rows, ignore_index=True) if rows else \
        pd.DataFrame(columns=["user_id", "timestamp", "kwh"])
    _write(cons, d / "consumption.csv")
    _write(pd.DataFrame({"timestamp": temp.index, "temp_c": temp.to_numpy()}).dropna(),
           d / "temperature.csv")
    _write(pd.DataFrame([{"user_id": e.user_id, "start": e.start, "duration_hours": e.duration_hours}
                         for u in sorted(ev) if u in kept for e in ev[u]],
                        columns=list(ingest.EVENT_COLUMNS)), d / "events.csv")
    status = [{"user_id": u, "status": "kept", "reason": ""} for u in kept]
    status += [{"user_id": u, "status": "removed", "reason": r} for u, r in log]
    _write(pd.DataFrame(status, columns=["user_id", "status", "reason"])
           .sort_values("user_id", kind="stable"), d / "users.csv")
    _write(pd.DataFrame([(r.line, r.reason) for r in data.rejected], columns=["line", "reason"]),
           d / "rejected_rows.csv")
    logger.info("ingest: %d users kept, %d removed, %d rows rejected",
                len(kept), len(log), len(data.rejected))


def _prep_one(args):
    user, cons, temp, events, cfg, path = args
    try:
        _, fs, adf = prepare_user(user, cons, temp, events, cfg)
    except (InsufficientDataError, ingest.IngestError) as exc:
        return {"user_id": user, "status": "excluded", "reason": str(exc)}
    fs.save(path)
    row = {"user_id": user, "status": "ok", "reason": "", **fs.diagnostics}
    if adf is not None:
        row.update(adf_statistic=adf.test_statistic, adf_crit_1pct=adf.critical_values["1%"],
                   stationary_99=adf.stationary_at_99)
    return row


def stage_prep(cfg: Config, out: Path) -> None:
    src = out / "ingest"
    d = _stage(out, "prep")
    feat_dir = d / "features"
    feat_dir.mkdir(exist_ok=True)
    for old in feat_dir.glob("*.csv"):
        old.unlink()
    cons = _read_consumption(src / "consumption.csv")
    temp = _read_temperature(src / "temperature.csv")
    events = _read_events(src / "events.csv")
    jobs = [(u, c, temp, events.get(u, []), cfg, feat_dir / f"{u}.csv") for u, c in cons.items()]
    rows = _map(_prep_one, jobs, cfg.jobs)
    cols = ["user_id", "status", "reason", "n_train_rows", "n_dr_rows", "n_spillover_hours",
            "adf_statistic", "adf_crit_1pct", "stationary_99"]
    _write(pd.DataFrame(rows).reindex(columns=cols), d / "prep_log.csv")


def _forecast_one(args):
    path, cons, events, cfg, model_dir = args
    fs = FeatureSet.load(path)
    run = run_features(fs, cons, events, cfg)
    for method, model in run.models.items():
        model.save(model_dir / f"{fs.user_id}__{method}.json")
    mape = [{"user_id": fs.user_id, "method": m, "mape": v} for m, v in run.mape.items()]
    return pd.concat(run.predictions, ignore_index=True), mape


def stage_forecast(cfg: Config, out: Path) -> None:
    d = _stage(out, "forecast")
    model_dir = d / "models"
    model_dir.mkdir(exist_ok=True)
    for old in model_dir.glob("*.json"):
        old.unlink()
    cons = _read_consumption(out / "ingest" / "consumption.csv")
    events = _read_events(out / "ingest" / "events.csv")
    paths = sorted((out / "prep" / "features").glob("*.csv"))
    jobs = []
    for p in paths:
        user = p.stem
        jobs.append((p, cons[user], events.get(user, []), cfg, model_dir))
    results = _map(_forecast_one, jobs, cfg.jobs)
    preds = [r[0] for r in results]
    pred_cols = ["user_id", "method", "timestamp", "y", "y_hat", "bias", "scale"]
    predictions = pd.concat(preds, ignore_index=True) if preds else pd.DataFrame(columns=pred_cols)
    _write(predictions.sort_values(["user_id", "method", "timestamp"], kind="stable"),
           d / "predictions.csv")
    _write(pd.DataFrame([row for r in results for row in r[1]], columns=["user_id", "method", "mape"])
           .sort_values(["user_id", "method"], kind="stable"), d / "mape.csv")


def stage_effects(cfg: Config, out: Path) -> None:
    d = _stage(out, "effects")
    preds = pd.read_csv(out / "forecast" / "predictions.csv", dtype={"user_id": str})
    estimates = []
    for (user, method), grp in preds.groupby(["user_id", "method"], sort=True):
        estimates.append(estimate(user, method, grp["y"].to_numpy(), grp["y_hat"].to_numpy(),
                                  bias=float(grp["bias"].iloc[0]),
                                  scale=float(grp["scale"].iloc[0]),
                                  alternative=cfg.alternative, mpr_floor=cfg.mpr_floor))
    write_results(estimates, d / "results.csv")


def stage_segment(cfg: Config, out: Path) -> None:
    d = _stage(out, "segment")
    cons = _read_consumption(out / "ingest" / "consumption.csv")
    seg = segment_population(cons, ks=tuple(cfg.kmeans_ks), window=cfg.shape_window,
                             seed=cfg.seed, n_init=cfg.kmeans_restarts,
                             percentile_k=cfg.percentile_k, raw_std=cfg.hourly_std_raw)
    _write(seg.scores, d / "scores.csv")
    for k, model in seg.models.items():
        _write(centroid_frame(model), d / f"centroids_k{k}.csv")
    _write(pd.DataFrame({"user_id": seg.excluded}), d / "excluded.csv")


def stage_report(cfg: Config, out: Path) -> None:
    d = _stage(out, "report")
    results = read_results(out / "effects" / "results.csv")
    mapes = pd.read_csv(out / "forecast" / "mape.csv", dtype={"user_id": str})
    merged = results.merge(mapes, on=["user_id", "method"], how="left")
    summary, outliers = distribution_summary(merged, SUMMARY_METRICS)
    _write(summary, d / "summary.csv")
    _write(outliers, d / "outliers.csv")
    scores_path = out / "segment" / "scores.csv"
    if scores_path.exists():
        scores = pd.read_csv(scores_path, dtype={"user_id": str})
        score_cols = [f"entropy_k{k}" for k in cfg.kmeans_ks] + ["hourly_std"]
        table = rejection_tables(results, scores, score_cols, cfg.significance_levels,
                                 cfg.n_bins)
        _write(table, d / "rejection.csv")


def stage_synth(cfg: Config, out: Path, recovery: bool = False, sigmas=None, seeds=None,
                levels=None) -> dict:
    from . import synth

    d = _stage(out, "synth")
    extra = dict(cfg.synth)
    n_users = int(extra.pop("n_users", 20))
    mixture_levels = extra.pop("mixture_levels", list(synth.MIXTURE_LEVELS))
    scfg = synth.SynthConfig.from_dict({**extra, "seed": extra.get("seed", cfg.seed)})
    if recovery:
        frame = synth.recovery_experiment(
            scfg, sigmas=sigmas or synth.SIGMA_GRID, mixture_levels=levels or mixture_levels,
            seeds=seeds or range(cfg.seed, cfg.seed + 5), methods=cfg.methods, run_cfg=cfg)
        _write(frame, d / "recovery.csv")
        return {"recovery": d / "recovery.csv"}
    pop = synth.generate_population(scfg, n_users, mixture_levels)
    return synth.write_population(pop, d)


def _display(path: Path, out: Path) -> str:
    try:
        return str(Path(path).resolve().relative_to(out.resolve()))
    except ValueError:
        return str(path)


def write_manifest(cfg: Config, out: Path, inputs: dict, command: str) -> Path:
    import scipy

    outputs = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    doc = {
        "schema": "drtarget.manifest/1",
        "command": command,
        "config_sha256": cfg.digest(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "jobs"},
        "inputs": {k: {"path": _display(v, out), "sha256": _sha256(v)}
                   for k, v in sorted(inputs.items())},
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in outputs},
        "versions": {"drtarget": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "pandas": pd.__version__,
                     "scipy": scipy.__version__},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path


# ---------------------------------------------------------------- parser

def _add_globals(p: argparse.ArgumentParser, sub: bool) -> None:
    kw = {"default": argparse.SUPPRESS} if sub else {}
    p.add_argument("--config", type=Path, help="YAML config file", **kw)
    p.add_argument("--seed", type=int, help="override the config seed", **kw)
    p.add_argument("--out-dir", type=Path, help="output directory (default: out)", **kw)
    p.add_argument("--methods", help="comma-separated forecasting methods", **kw)
    p.add_argument("--jobs", type=int, help="parallel worker processes", **kw)
    p.add_argument("-v", "--verbose", action="store_true", **kw)


def _add_inputs(p: argparse.ArgumentParser, required: bool) -> None:
    for name in ("meter", "temperature", "events", "flags"):
        p.add_argument(f"--{name}", type=Path, required=required, help=f"{name} CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drtarget", description=__doc__.splitlines()[0])
    _add_globals(parser, sub=False)
    parser.set_defaults(out_dir=Path("out"), jobs=None, verbose=False)
    subs = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "validate raw CSVs and write hourly series",
        "prep": "build per-user feature sets",
        "forecast": "fit forecasters and predict DR hours",
        "effects": "estimate reductions and test them",
        "segment": "load-shape clustering and variability scores",
        "synth": "generate a synthetic population or run the recovery experiment",
        "report": "box-plot summaries and rejection-rate tables",
        "run-all": "ingest through report in one go",
    }
    for name, text in helps.items():
        p = subs.add_parser(name, help=text)
        _add_globals(p, sub=True)
        if name == "ingest":
            _add_inputs(p, required=True)
        elif name == "run-all":
            _add_inputs(p, required=False)
        elif name == "synth":
            p.add_argument("--recovery", action="store_true",
                           help="run the recovery experiment instead of writing a population")
            p.add_argument("--sigmas", help="comma-separated noise levels")
            p.add_argument("--seeds", type=int, help="number of seeds")
            p.add_argument("--levels", help="comma-separated mixture levels in [0, 1]")
    return parser


def load_config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "methods", None):
        cfg = replace(cfg, methods=[m.strip() for m in args.methods.split(",") if m.strip()])
    if getattr(args, "jobs", None):
        cfg = replace(cfg, jobs=args.jobs)
    return cfg


def _floats(text):
    return [float(x) for x in text.split(",")] if text else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("methods", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"drtarget: bad config: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {}
    if args.config:
        inputs["config"] = args.config
    cmd = args.command
    try:
        if cmd in ("ingest", "run-all"):
            paths = {k: getattr(args, k) for k in ("meter", "temperature", "events", "flags")}
            if cmd == "run-all" and not all(paths.values()):
                if any(paths.values()):
                    print("drtarget: give all four input files or none", file=sys.stderr)
                    return 2
                generated = stage_synth(cfg, out)
                paths = {k: generated[k] for k in paths}
            inputs.update(paths)
            stage_ingest(cfg, out, **paths)
        if cmd == "run-all":
            for stage in (stage_prep, stage_forecast, stage_effects, stage_segment, stage_report):
                stage(cfg, out)
        elif cmd == "synth":
            n = args.seeds
            stage_synth(cfg, out, args.recovery, _floats(args.sigmas),
                        range(cfg.seed, cfg.seed + n) if n else None, _floats(args.levels))
        elif cmd != "ingest":
            {"prep": stage_prep, "forecast": stage_forecast, "effects": stage_effects,
             "segment": stage_segment, "report": stage_report}[cmd](cfg, out)
    except (ingest.IngestError, FileNotFoundError, ValueError) as exc:
        print(f"drtarget {cmd}: {exc}", file=sys.stderr)
        return 1
    if cmd == "run-all":
        write_manifest(cfg, out, inputs, cmd)
    return 0


if __name__ == "__main__":
    sys.exit(main())
