"""Pipeline orchestration: ingest, postprocess, backtest, evaluate, report.

Each stage is independently runnable and leaves its artifacts under the
configured output directory:

    cache/        quantile surfaces, keyed by a content hash of their inputs
    forecasts/    per-spec CSV (date, hour, forecast, actual, error)
    analysis/     per-spec selection-frequency and impact grids
    eval/         per-spec daily RMSE series
    rmse_table.csv, cpa_matrix.csv, summary.json

Forecast files grow by whole days only, so an interrupted backtest resumes
cleanly with ``resume=True``. All outputs are byte-deterministic for a fixed
config and seed.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import evalstat
from .config import RunConfig
from .models import ModelSpec, first_feasible_day, rolling_backtest
from .panel import (MarketData, load_commodity_csv, load_hourly_csv,
                    load_quarter_hourly_csv)
from .postproc import ProbGrid, QuantileSurface, build_surface, make_grid


class PipelineStageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _stage(stage):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineStageError:
                raise
            except Exception as exc:
                raise PipelineStageError(stage, str(exc)) from exc
        return inner
    return wrap


def spec_filename(spec: ModelSpec) -> str:
    return spec.label.replace("^", "__")


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

@_stage("ingest")
def ingest(cfg: RunConfig) -> MarketData:
    """Read the canonical CSVs, normalize clocks, derive RES and ResLoad."""
    def hourly(key, name):
        path = cfg.series_path(key)
        if key in cfg.quarter_hourly:
            return load_quarter_hourly_csv(path, mode="mean", name=name)
        return load_hourly_csv(path, name=name)

    data = MarketData(
        prices=hourly("prices", "price"),
        forecasts={"Load": hourly("load_forecast", "Load"),
                   "Solar": hourly("solar_forecast", "Solar"),
                   "Wind": hourly("wind_forecast", "Wind")},
        actuals={"Load": hourly("load_actual", "Load"),
                 "Solar": hourly("solar_actual", "Solar"),
                 "Wind": hourly("wind_actual", "Wind")},
        commodities={name: load_commodity_csv(cfg.series_path(key), name)
                     for key, name in (("coal", "Coal"), ("gas", "Gas"),
                                       ("oil", "Oil"), ("eua", "EUA"))},
    )
    return data.with_derived()


# ---------------------------------------------------------------------------
# postprocess (quantile surfaces, cached)
# ---------------------------------------------------------------------------

def _dataset_hash(cfg: RunConfig) -> str:
    digest = hashlib.sha256()
    for key in sorted(("load_forecast", "load_actual", "solar_forecast",
                       "solar_actual", "wind_forecast", "wind_actual")):
        digest.update(cfg.series_path(key).read_bytes())
    return digest.hexdigest()[:16]


def surface_requirements(cfg: RunConfig) -> set:
    """(variable, method, grid_label) triples needed by the configured specs."""
    need = set()
    for spec in cfg.specs:
        for var in spec.variables:
            need.add((var, spec.postproc, spec.grid_label))
    return need


def _surface_cache_path(cfg: RunConfig, var, method, grid_label, data_hash) -> Path:
    return (cfg.output_dir / "cache" /
            f"surface_{var}_{method}_{grid_label}_N{cfg.postproc_window}_{data_hash}.npz")


def _save_surface(surface: QuantileSurface, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path, values=surface.values, untrained=surface.untrained,
        qr_fallback=surface.qr_fallback, levels=surface.grid.levels,
        meta=np.array([surface.variable, surface.grid.label, surface.method,
                       surface.first_day.isoformat()]))


def _load_surface(path: Path) -> QuantileSurface:
    with np.load(path, allow_pickle=False) as z:
        var, label, method, first = (str(x) for x in z["meta"])
        grid = ProbGrid(label, z["levels"], float(z["levels"][0]))
        return QuantileSurface(var, grid, method, dt.date.fromisoformat(first),
                               z["values"], z["untrained"], z["qr_fallback"])


@_stage("postprocess")
def postprocess(cfg: RunConfig, data: MarketData) -> dict:
    """Build (or load from cache) every quantile surface the specs need.

    Surfaces cover [oos_start - price_window, oos_end]: calibration rows of
    the price models need quantile inputs too. Returns
    {(var, method, grid_label): QuantileSurface}.
    """
    need = surface_requirements(cfg)
    if not need:
        return {}
    data_hash = _dataset_hash(cfg)
    first = cfg.oos_start - dt.timedelta(days=cfg.price_window)
    surfaces = {}
    for var, method, grid_label in sorted(need):
        path = _surface_cache_path(cfg, var, method, grid_label, data_hash)
        if path.exists():
            surfaces[(var, method, grid_label)] = _load_surface(path)
            continue
        grid = make_grid(grid_label, cfg.postproc_window)
        surf = build_surface(var, data.forecasts[var], data.actuals[var], method,
                             grid, n_window=cfg.postproc_window,
                             first_day=first, last_day=cfg.oos_end)
        _save_surface(surf, path)
        surfaces[(var, method, grid_label)] = surf
    return surfaces


# ---------------------------------------------------------------------------
# backtest
# ---------------------------------------------------------------------------

def _forecast_path(cfg: RunConfig, spec: ModelSpec) -> Path:
    return cfg.output_dir / "forecasts" / f"{spec_filename(spec)}.csv"


def _read_forecast_days(path: Path) -> dict:
    """Raw CSV lines of completed days (24 rows each) from an existing file.

    Lines are kept verbatim so a resumed file stays byte-identical to an
    uninterrupted run.
    """
    if not path.exists():
        return {}
    by_day: dict = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "date,hour,forecast,actual,error":
            raise PipelineStageError("backtest", f"{path} has an unexpected header")
        for line in fh:
            if not line.endswith("\n"):
                continue   # partially written record
            date_str = line.split(",", 1)[0]
            by_day.setdefault(date_str, []).append(line)
    done = {}
    for date_str, lines in by_day.items():
        if len(lines) == 24:
            done[dt.date.fromisoformat(date_str)] = "".join(lines)
    return done


def _write_forecast_header(fh):
    fh.write("date,hour,forecast,actual,error\n")


def _format_day_rows(day, fc24, ac24) -> str:
    return "".join(
        f"{day},{h},{fc24[h - 1]:.10g},{ac24[h - 1]:.10g},{ac24[h - 1] - fc24[h - 1]:.10g}\n"
        for h in range(1, 25))


def _spec_surfaces(surfaces: dict, spec: ModelSpec) -> dict:
    return {var: surfaces[(var, spec.postproc, spec.grid_label)]
            for var in spec.variables}


def _backtest_one_spec(cfg: RunConfig, data: MarketData, surfaces: dict,
                       spec: ModelSpec, resume: bool) -> dict:
    path = _forecast_path(cfg, spec)
    path.parent.mkdir(parents=True, exist_ok=True)
    done = _read_forecast_days(path) if resume else {}
    all_days = [cfg.oos_start + dt.timedelta(days=i)
                for i in range((cfg.oos_end - cfg.oos_start).days + 1)]
    todo = [day for day in all_days if day not in done]

    if todo:
        start, end = todo[0], todo[-1]
        if (end - start).days + 1 != len(todo):
            raise PipelineStageError(
                "backtest", f"{path} has non-contiguous completed days; "
                "remove it or run without --resume")
        with open(path, "w", encoding="utf-8", buffering=1) as fh:
            _write_forecast_header(fh)
            for day in all_days[:len(all_days) - len(todo)]:
                fh.write(done[day])
            result = rolling_backtest(
                data, _spec_surfaces(surfaces, spec), spec, start, end,
                run_seed=cfg.seed, window=cfg.price_window,
                on_day=lambda day, fc24, ac24: fh.write(_format_day_rows(day, fc24, ac24)))
        records = result.records
    else:
        records = []

    analysis_dir = cfg.output_dir / "analysis"
    analysis_dir.mkdir(parents=True, exist_ok=True)
    if records:
        stem = spec_filename(spec)
        for var in spec.variables:
            freq = evalstat.selection_frequency(records, var)
            with open(analysis_dir / f"{stem}_selection_{var}.csv", "w",
                      encoding="utf-8") as fh:
                fh.write("variable,tau,hour,pct\n")
                for (tau, hour), pct in sorted(freq.items()):
                    fh.write(f"{var},{tau:.10g},{hour},{pct:.10g}\n")
        impact = evalstat.group_impact(records)
        with open(analysis_dir / f"{stem}_impact.csv", "w", encoding="utf-8") as fh:
            fh.write("group,hour,impact_signed,impact_abs\n")
            for group in sorted(impact["signed"]):
                s, a = impact["signed"][group], impact["absolute"][group]
                for hh in range(24):
                    fh.write(f"{group},{hh + 1},{s[hh]:.10g},{a[hh]:.10g}\n")
    return {"spec": spec.label, "days_fitted": len(todo)}


def _backtest_worker(args):
    cfg, data, surfaces, spec, resume = args
    return _backtest_one_spec(cfg, data, surfaces, spec, resume)


@_stage("backtest")
def backtest(cfg: RunConfig, data: MarketData, surfaces: dict,
             resume: bool = False, dry_run: bool = False) -> list:
    """Run the rolling backtest for every configured spec."""
    feasible = first_feasible_day(
        data, cfg.oos_start - dt.timedelta(days=cfg.price_window),
        cfg.price_window)
    first_surface_day = data.prices.first_day + dt.timedelta(days=cfg.postproc_window)
    need_surfaces = cfg.oos_start - dt.timedelta(days=cfg.price_window)
    if need_surfaces < first_surface_day and surface_requirements(cfg):
        raise PipelineStageError(
            "backtest",
            f"calibration needs quantile surfaces from {need_surfaces} but the "
            f"postprocessing window only supports {first_surface_day} onward")
    if cfg.oos_start < feasible:
        raise PipelineStageError(
            "backtest", f"oos_start {cfg.oos_start} is before the first feasible "
            f"forecast day {feasible}")
    if cfg.oos_end > data.prices.last_day:
        raise PipelineStageError(
            "backtest", f"oos_end {cfg.oos_end} is beyond the data ({data.prices.last_day})")
    if dry_run:
        return [{"spec": s.label, "days_fitted": 0, "dry_run": True} for s in cfg.specs]

    jobs = [(cfg, data, surfaces, spec, resume) for spec in cfg.specs]
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(_backtest_worker, jobs))
    return [_backtest_worker(j) for j in jobs]


# ---------------------------------------------------------------------------
# evaluate + report
# ---------------------------------------------------------------------------

def read_forecast_errors(cfg: RunConfig, spec: ModelSpec):
    """(days, errors [n x 24]) from a spec's forecast file."""
    path = _forecast_path(cfg, spec)
    if not path.exists():
        raise PipelineStageError("evaluate", f"no forecasts for {spec.label}; run backtest")
    df = pd.read_csv(path)
    days = sorted(df["date"].unique())
    piv = df.pivot_table(index="date", columns="hour", values="error").loc[days]
    if piv.isna().any().any() or piv.shape[1] != 24:
        raise PipelineStageError("evaluate", f"{path} has incomplete days")
    return [dt.date.fromisoformat(str(d)) for d in days], piv.to_numpy()


@_stage("evaluate")
def evaluate(cfg: RunConfig) -> dict:
    """Daily RMSE series per spec, written under eval/."""
    out = {}
    eval_dir = cfg.output_dir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    for spec in cfg.specs:
        days, errors = read_forecast_errors(cfg, spec)
        series = evalstat.daily_rmse_series(errors)
        with open(eval_dir / f"{spec_filename(spec)}_daily_rmse.csv", "w",
                  encoding="utf-8") as fh:
            fh.write("date,rmse\n")
            for day, val in zip(days, series):
                fh.write(f"{day},{val:.10g}\n")
        out[spec.label] = (days, errors, series)
    return out


@_stage("report")
def report(cfg: RunConfig, evaluated: dict = None) -> dict:
    """Aggregate tables: RMSE with %chng against the matching-base benchmark,
    pairwise CPA matrix, JSON summary."""
    if evaluated is None:
        evaluated = evaluate(cfg)
    by_label = {spec.label: spec for spec in cfg.specs}
    benchmarks = {spec.base: spec.label for spec in cfg.specs if spec.is_benchmark}

    rows = []
    for label, (days, errors, series) in evaluated.items():
        spec = by_label[label]
        agg = evalstat.rmse_aggregate(series)
        pct = ""
        bench = benchmarks.get(spec.base)
        if bench is not None and bench != label:
            ref = evalstat.rmse_aggregate(evaluated[bench][2])
            pct = f"{100.0 * np.log(agg / ref):.10g}"
        rows.append((spec.base, spec.postproc or "", spec.varset or "",
                     spec.grid_label or "", agg, pct))
    with open(cfg.output_dir / "rmse_table.csv", "w", encoding="utf-8") as fh:
        fh.write("base,postproc,varset,grid,rmse,pct_chng\n")
        for r in rows:
            fh.write(f"{r[0]},{r[1]},{r[2]},{r[3]},{r[4]:.10g},{r[5]}\n")

    labels = [s.label for s in cfg.specs]
    with open(cfg.output_dir / "cpa_matrix.csv", "w", encoding="utf-8") as fh:
        fh.write("model_a,model_b,statistic,p_two_sided,p_one_sided,"
                 "phi0,phi1,degenerate\n")
        for la in labels:
            for lb in labels:
                if la == lb:
                    continue
                try:
                    res = evalstat.cpa_test(evaluated[la][2], evaluated[lb][2])
                except evalstat.EvalError:
                    # out-of-sample period too short for the test
                    fh.write(f"{la},{lb},,,,,,1\n")
                    continue
                fh.write(f"{la},{lb},{res.statistic:.10g},{res.p_value:.10g},"
                         f"{res.p_one_sided:.10g},{res.phi[0]:.10g},"
                         f"{res.phi[1]:.10g},{int(res.degenerate)}\n")

    summary = {
        "specs": {label: {"rmse": evalstat.rmse_aggregate(evaluated[label][2]),
                          "days": len(evaluated[label][0])}
                  for label in labels},
        "best": min(labels, key=lambda l: evalstat.rmse_aggregate(evaluated[l][2])),
        "config": {
            "postproc_window": cfg.postproc_window,
            "price_window": cfg.price_window,
            "oos_start": cfg.oos_start.isoformat(),
            "oos_end": cfg.oos_end.isoformat(),
            "seed": cfg.seed,
        },
    }
    with open(cfg.output_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def run_pipeline(cfg: RunConfig, resume: bool = False, dry_run: bool = False) -> dict:
    """ingest -> surfaces -> backtests -> evaluation -> report."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    data = ingest(cfg)
    surfaces = postprocess(cfg, data)
    stats = backtest(cfg, data, surfaces, resume=resume, dry_run=dry_run)
    if dry_run:
        return {"dry_run": True, "specs": [s["spec"] for s in stats]}
    return report(cfg, evaluate(cfg))
