"""Run configuration: JSON file, environment overrides, validation.

Schema (all fields optional unless marked; paths resolve relative to the
config file):

    {
      "data_dir": "data",               # required: canonical CSV inputs
      "output_dir": "out",              # required: everything written here
      "postproc_window": 364,           # N, days for quantile calibration
      "price_window": 728,              # W, days for price-model calibration
      "oos_start": "2017-12-28",        # required: first forecast day
      "oos_end": "2023-12-31",          # required: last forecast day
      "specs": ["Expert", "HLM-QR^ResLoad_T201"],
      "default_grid": "T201",           # grid for specs written without _Tn
      "quarter_hourly": [],             # series arriving at 15-min resolution
      "seed": 0,
      "threads": 1
    }

Environment variables with the ``EPFQ_`` prefix override scalar fields, e.g.
``EPFQ_SEED=3`` or ``EPFQ_OUTPUT_DIR=/tmp/run``.
"""

from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .models import ModelError, ModelSpec, parse_spec
from .postproc import GRID_SIZES

ENV_PREFIX = "EPFQ_"

_SERIES_FILES = {
    "prices": "prices.csv",
    "load_forecast": "load_forecast.csv",
    "load_actual": "load_actual.csv",
    "solar_forecast": "solar_forecast.csv",
    "solar_actual": "solar_actual.csv",
    "wind_forecast": "wind_forecast.csv",
    "wind_actual": "wind_actual.csv",
    "coal": "coal.csv",
    "gas": "gas.csv",
    "oil": "oil.csv",
    "eua": "eua.csv",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data_dir: Path
    output_dir: Path
    oos_start: dt.date
    oos_end: dt.date
    specs: list
    postproc_window: int = 364
    price_window: int = 728
    default_grid: str = "T201"
    quarter_hourly: list = field(default_factory=list)
    seed: int = 0
    threads: int = 1

    def series_path(self, key: str) -> Path:
        return self.data_dir / _SERIES_FILES[key]

    def validate(self) -> None:
        if self.postproc_window < 30:
            raise ConfigError(
                f"postproc_window: must be >= 30 days, got {self.postproc_window}")
        if self.price_window < self.postproc_window:
            raise ConfigError(
                f"price_window: must be >= postproc_window "
                f"({self.postproc_window}), got {self.price_window}")
        if self.oos_end < self.oos_start:
            raise ConfigError(f"oos_end: {self.oos_end} is before oos_start {self.oos_start}")
        if not self.specs:
            raise ConfigError("specs: at least one model spec is required")
        if self.default_grid not in GRID_SIZES:
            raise ConfigError(f"default_grid: unknown grid '{self.default_grid}'")
        if self.seed < 0:
            raise ConfigError(f"seed: must be nonnegative, got {self.seed}")
        if self.threads < 1:
            raise ConfigError(f"threads: must be >= 1, got {self.threads}")
        unknown = set(self.quarter_hourly) - set(_SERIES_FILES)
        if unknown:
            raise ConfigError(f"quarter_hourly: unknown series {sorted(unknown)}")


def _parse_date(raw, fieldname: str) -> dt.date:
    try:
        return dt.date.fromisoformat(str(raw))
    except ValueError as exc:
        raise ConfigError(f"{fieldname}: expected ISO date, got {raw!r} ({exc})") from None


def _parse_int(raw, fieldname: str) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{fieldname}: expected an integer, got {raw!r}") from None


def parse_spec_string(text: str, default_grid: str) -> ModelSpec:
    """Parse a model spec, appending the default grid when _Tn is omitted."""
    try:
        return parse_spec(text)
    except ModelError:
        if "^" in text and "_T" not in text:
            return parse_spec(f"{text}_{default_grid}")
        raise


def parse_config(path, overrides: dict = None) -> RunConfig:
    """Load, override and validate a run configuration.

    ``overrides`` (e.g. from CLI flags) wins over environment variables,
    which win over the file. Unknown keys and malformed fields raise
    ConfigError naming the offending field.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    known = {"data_dir", "output_dir", "oos_start", "oos_end", "specs",
             "postproc_window", "price_window", "default_grid",
             "quarter_hourly", "seed", "threads"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")

    for key in known:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            raw[key] = json.loads(env) if key in ("specs", "quarter_hourly") else env
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[key] = val

    for required in ("data_dir", "output_dir", "oos_start", "oos_end"):
        if required not in raw:
            raise ConfigError(f"{required}: required field is missing")

    base = path.parent
    default_grid = str(raw.get("default_grid", "T201"))
    specs_raw = raw.get("specs", ["Expert", "HLM"])
    if not isinstance(specs_raw, list):
        raise ConfigError("specs: expected a list of spec strings")
    specs = []
    for s in specs_raw:
        try:
            specs.append(parse_spec_string(str(s), default_grid))
        except ModelError as exc:
            raise ConfigError(f"specs: {exc}") from None
    if len({sp.label for sp in specs}) != len(specs):
        raise ConfigError("specs: duplicate model specs")

    cfg = RunConfig(
        data_dir=(base / str(raw["data_dir"])).resolve(),
        output_dir=(base / str(raw["output_dir"])).resolve(),
        oos_start=_parse_date(raw["oos_start"], "oos_start"),
        oos_end=_parse_date(raw["oos_end"], "oos_end"),
        specs=specs,
        postproc_window=_parse_int(raw.get("postproc_window", 364), "postproc_window"),
        price_window=_parse_int(raw.get("price_window", 728), "price_window"),
        default_grid=default_grid,
        quarter_hourly=list(raw.get("quarter_hourly", [])),
        seed=_parse_int(raw.get("seed", 0), "seed"),
        threads=_parse_int(raw.get("threads", 1), "threads"),
    )
    cfg.validate()
    return cfg
