"""Command-line entry point.

Subcommands mirror the pipeline stages so each is independently runnable and
its artifacts cacheable:

    epfq synth      --seed 0 --days 1100 --out data/
    epfq ingest     --config run.json
    epfq postprocess --config run.json
    epfq backtest   --config run.json [--resume] [--dry-run]
    epfq evaluate   --config run.json
    epfq report     --config run.json
    epfq run        --config run.json          # all stages in order

``--spec`` (repeatable), ``--seed`` and ``--threads`` override the config;
environment variables prefixed ``EPFQ_`` override it too (see epfq.config).
Any stage failure prints a stage-tagged message and exits nonzero.
"""

from __future__ import annotations

import argparse
import datetime as dt
import sys

from . import pipeline
from .config import ConfigError, parse_config
from .panel import write_commodity_csv, write_hourly_csv
from .synth import generate_synthetic_market


def _add_config_args(p, specs=True):
    p.add_argument("--config", required=True, help="path to the JSON run config")
    if specs:
        p.add_argument("--spec", action="append", default=None,
                       help="model spec string, repeatable (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="override the run seed")
    p.add_argument("--threads", type=int, default=None, help="override the thread budget")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="epfq", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic market dataset as CSVs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int, default=1100)
    p.add_argument("--first-day", default="2015-01-01")
    p.add_argument("--out", required=True, help="directory for the CSV files")

    for name in ("ingest", "postprocess", "evaluate", "report"):
        p = sub.add_parser(name, help=f"run the {name} stage")
        _add_config_args(p, specs=name in ("postprocess", "evaluate", "report"))

    for name in ("backtest", "run"):
        p = sub.add_parser(name, help="run backtests" if name == "backtest"
                           else "run the whole pipeline")
        _add_config_args(p)
        p.add_argument("--resume", action="store_true",
                       help="skip days whose forecasts already exist")
        p.add_argument("--dry-run", action="store_true",
                       help="validate configuration and data without fitting")
    return ap


def _load_config(args):
    overrides = {}
    if getattr(args, "spec", None):
        overrides["specs"] = args.spec
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = args.threads
    return parse_config(args.config, overrides)


def cmd_synth(args) -> int:
    from pathlib import Path
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_synthetic_market(args.seed, args.days,
                                     dt.date.fromisoformat(args.first_day))
    write_hourly_csv(data.prices, out / "prices.csv")
    for var, stem in (("Load", "load"), ("Solar", "solar"), ("Wind", "wind")):
        write_hourly_csv(data.forecasts[var], out / f"{stem}_forecast.csv")
        write_hourly_csv(data.actuals[var], out / f"{stem}_actual.csv")
    for name, stem in (("Coal", "coal"), ("Gas", "gas"), ("Oil", "oil"), ("EUA", "eua")):
        write_commodity_csv(data.commodities[name], out / f"{stem}.csv")
    print(f"synthetic market: {args.days} days from {args.first_day}, "
          f"seed {args.seed} -> {out}")
    return 0


def cmd_stage(args) -> int:
    cfg = _load_config(args)
    if args.command == "ingest":
        data = pipeline.ingest(cfg)
        print(f"ingested {data.prices.n_days} days "
              f"[{data.prices.first_day} .. {data.prices.last_day}]")
        return 0
    if args.command == "postprocess":
        data = pipeline.ingest(cfg)
        surfaces = pipeline.postprocess(cfg, data)
        for key, surf in sorted(surfaces.items()):
            print(f"surface {key[0]} {key[1]} {key[2]}: "
                  f"{surf.n_days} days from {surf.first_day}")
        return 0
    if args.command == "backtest":
        data = pipeline.ingest(cfg)
        surfaces = pipeline.postprocess(cfg, data)
        for stat in pipeline.backtest(cfg, data, surfaces, resume=args.resume,
                                      dry_run=args.dry_run):
            print(f"backtest {stat['spec']}: {stat['days_fitted']} days fitted"
                  + (" (dry run)" if stat.get("dry_run") else ""))
        return 0
    if args.command == "evaluate":
        evaluated = pipeline.evaluate(cfg)
        for label, (days, _, series) in evaluated.items():
            import numpy as np
            print(f"{label}: {len(days)} days, "
                  f"rmse {float(np.sqrt(np.mean(series ** 2))):.4f}")
        return 0
    if args.command == "report":
        summary = pipeline.report(cfg)
        for label, info in sorted(summary["specs"].items()):
            print(f"{label}: rmse {info['rmse']:.4f} over {info['days']} days")
        print(f"best: {summary['best']}")
        return 0
    if args.command == "run":
        out = pipeline.run_pipeline(cfg, resume=args.resume, dry_run=args.dry_run)
        if out.get("dry_run"):
            print("dry run ok:", ", ".join(out["specs"]))
        else:
            for label, info in sorted(out["specs"].items()):
                print(f"{label}: rmse {info['rmse']:.4f} over {info['days']} days")
            print(f"best: {out['best']}")
        return 0
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        return cmd_stage(args)
    except ConfigError as exc:
        print(f"[config] {exc}", file=sys.stderr)
        return 2
    except pipeline.PipelineStageError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
