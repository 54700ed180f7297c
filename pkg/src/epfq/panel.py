"""Hourly panel container and data preparation.

Everything downstream (postprocessing, price models, evaluation) operates on
day x 24 matrices with an attached day calendar. This module owns ingestion
from CSV, the clock-change repair, quarter-hour aggregation, derived
fundamental series and window slicing.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

ONE_DAY = dt.timedelta(days=1)

# Series that cannot physically go below zero.  ResLoad is deliberately
# absent: load minus renewables may be negative.
NONNEGATIVE_VARIABLES = ("Load", "Solar", "Wind", "RES")


class PanelError(ValueError):
    """Raised for malformed raw data or out-of-range panel access."""


@dataclass(frozen=True)
class HourlyPanel:
    """One hourly series as a rectangular [n_days x 24] matrix.

    Rows are consecutive calendar days starting at ``first_day``; columns are
    delivery hours 1..24 stored positionally (column 0 = hour 1). Values are
    immutable after construction.
    """

    first_day: dt.date
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 24 or v.shape[0] < 1:
            raise PanelError(f"panel must be [n_days x 24], got {v.shape}")
        if not np.isfinite(v).all():
            raise PanelError(f"panel '{self.name}' contains non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def last_day(self) -> dt.date:
        return self.first_day + dt.timedelta(days=self.n_days - 1)

    def index(self, day: dt.date) -> int:
        i = (day - self.first_day).days
        if not 0 <= i < self.n_days:
            raise PanelError(f"day {day} outside panel [{self.first_day}, {self.last_day}]")
        return i

    def day_at(self, i: int) -> dt.date:
        return self.first_day + dt.timedelta(days=int(i))

    def row(self, day: dt.date) -> np.ndarray:
        return self.values[self.index(day)]

    def get(self, day: dt.date, hour: int) -> float:
        if not 1 <= hour <= 24:
            raise PanelError(f"hour must be in 1..24, got {hour}")
        return float(self.values[self.index(day), hour - 1])

    def days(self):
        return [self.first_day + dt.timedelta(days=i) for i in range(self.n_days)]

    def rename(self, name: str) -> "HourlyPanel":
        return HourlyPanel(self.first_day, self.values, name)


def _repair_slots(raw, slots_per_day: int, name: str) -> tuple[dt.date, np.ndarray]:
    """Bucket raw (timestamp, value) pairs into day slots and repair the
    clock-change pattern: a single missing slot is filled with the mean of its
    neighbours, a doubled slot is replaced by the mean of its two values."""
    per_hour = 60 // (slots_per_day // 24)
    buckets: dict[tuple[dt.date, int], list[float]] = {}
    for ts, val in raw:
        slot = ts.hour * (slots_per_day // 24) + ts.minute // per_hour
        buckets.setdefault((ts.date(), slot), []).append(float(val))
    if not buckets:
        raise PanelError(f"series '{name}': no observations")
    days = sorted({d for d, _ in buckets})
    first, last = days[0], days[-1]
    n_days = (last - first).days + 1
    flat = np.full(n_days * slots_per_day, np.nan)
    for (d, slot), vals in buckets.items():
        if len(vals) > 2:
            raise PanelError(f"series '{name}': {len(vals)} values for {d} slot {slot}")
        flat[(d - first).days * slots_per_day + slot] = float(np.mean(vals))
    missing = np.flatnonzero(np.isnan(flat))
    for i in missing:
        if i == 0 or i == len(flat) - 1 or np.isnan(flat[i - 1]) or np.isnan(flat[i + 1]):
            bad_day = first + dt.timedelta(days=int(i // slots_per_day))
            raise PanelError(f"series '{name}': gap longer than one slot around {bad_day}")
        flat[i] = 0.5 * (flat[i - 1] + flat[i + 1])
    return first, flat.reshape(n_days, slots_per_day)


def normalize_dst(raw, name: str = "") -> HourlyPanel:
    """Turn raw hourly (timestamp, value) pairs into a rectangular panel.

    The missing hour at the spring clock change is filled with the arithmetic
    mean of the surrounding hours; the doubled autumn hour is replaced by the
    mean of its two values. Anything worse is a hard error naming the day.
    """
    first, mat = _repair_slots(raw, 24, name)
    return HourlyPanel(first, mat, name)


def aggregate_quarter_hourly(raw, mode: str = "mean", name: str = "",
                             repair_dst: bool = False) -> HourlyPanel:
    """Aggregate quarter-hourly observations to hourly resolution.

    Expects exactly 4 values per hour. With ``repair_dst`` the clock-change
    repair runs at quarter-hour level first, otherwise an incomplete hour is
    an error.
    """
    if mode not in ("mean", "sum"):
        raise PanelError(f"unknown aggregation mode '{mode}'")
    if repair_dst:
        first, mat = _repair_slots(raw, 96, name)
    else:
        buckets: dict[tuple[dt.date, int], list[float]] = {}
        for ts, val in raw:
            buckets.setdefault((ts.date(), ts.hour * 4 + ts.minute // 15), []).append(float(val))
        days = sorted({d for d, _ in buckets})
        if not days:
            raise PanelError(f"series '{name}': no observations")
        first = days[0]
        n_days = (days[-1] - first).days + 1
        mat = np.full((n_days, 96), np.nan)
        for (d, slot), vals in buckets.items():
            if len(vals) != 1:
                raise PanelError(f"series '{name}': duplicate quarter-hour on {d}")
            mat[(d - first).days, slot] = vals[0]
        bad = np.flatnonzero(np.isnan(mat).any(axis=1))
        if bad.size:
            raise PanelError(
                f"series '{name}': incomplete hour on {first + dt.timedelta(days=int(bad[0]))}")
    quarters = mat.reshape(mat.shape[0], 24, 4)
    hourly = quarters.mean(axis=2) if mode == "mean" else quarters.sum(axis=2)
    return HourlyPanel(first, hourly, name)


def derive_fundamentals(load: HourlyPanel, solar: HourlyPanel,
                        wind: HourlyPanel) -> dict[str, HourlyPanel]:
    """RES = Solar + Wind, ResLoad = Load - RES, elementwise.

    Works identically for actual observations and for point forecasts.
    ResLoad is allowed to go negative.
    """
    for p in (solar, wind):
        if p.first_day != load.first_day or p.n_days != load.n_days:
            raise PanelError("load/solar/wind panels cover different day ranges")
    res = solar.values + wind.values
    return {
        "RES": HourlyPanel(load.first_day, res, "RES"),
        "ResLoad": HourlyPanel(load.first_day, load.values - res, "ResLoad"),
    }


def slice_window(panel: HourlyPanel, end_day: dt.date, length_days: int) -> HourlyPanel:
    """Rows for the ``length_days`` days ending at ``end_day`` inclusive."""
    if length_days < 1:
        raise PanelError(f"window length must be >= 1, got {length_days}")
    end = panel.index(end_day)
    start = end - length_days + 1
    if start < 0:
        raise PanelError(
            f"window of {length_days} days ending {end_day} starts before {panel.first_day}")
    return HourlyPanel(end_day - dt.timedelta(days=length_days - 1),
                       panel.values[start:end + 1], panel.name)


@dataclass(frozen=True)
class CommoditySeries:
    """Daily closing prices with calendar gaps (weekends, holidays).

    ``lookup(d)`` returns the most recent close dated at or before d - lag,
    i.e. the close rolls backward over non-trading days.
    """

    name: str
    ordinals: np.ndarray   # sorted day ordinals with an observed close
    closes: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.ordinals, dtype=np.int64)
        c = np.asarray(self.closes, dtype=float)
        if o.ndim != 1 or o.shape != c.shape or o.size == 0:
            raise PanelError(f"commodity '{self.name}': malformed series")
        if not (np.diff(o) > 0).all():
            raise PanelError(f"commodity '{self.name}': dates not strictly increasing")
        o.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "ordinals", o)
        object.__setattr__(self, "closes", c)

    @classmethod
    def from_items(cls, name: str, items) -> "CommoditySeries":
        pairs = sorted((d.toordinal(), float(v)) for d, v in items)
        ordinals = np.array([p[0] for p in pairs], dtype=np.int64)
        return cls(name, ordinals, np.array([p[1] for p in pairs]))

    def lookup(self, day: dt.date, lag: int = 2) -> float:
        cutoff = day.toordinal() - lag
        i = np.searchsorted(self.ordinals, cutoff, side="right") - 1
        if i < 0:
            raise PanelError(
                f"commodity '{self.name}': no close at or before {day - dt.timedelta(days=lag)}")
        return float(self.closes[i])

    def lookup_many(self, days: list[dt.date], lag: int = 2) -> np.ndarray:
        cutoffs = np.array([d.toordinal() - lag for d in days], dtype=np.int64)
        idx = np.searchsorted(self.ordinals, cutoffs, side="right") - 1
        if (idx < 0).any():
            bad = days[int(np.argmax(idx < 0))]
            raise PanelError(f"commodity '{self.name}': no close at or before {bad}")
        return self.closes[idx]


def weekday_dummies(day: dt.date) -> np.ndarray:
    """Seven one-hot weekday dummies, Monday first."""
    out = np.zeros(7)
    out[day.weekday()] = 1.0
    return out


@dataclass
class MarketData:
    """Everything a price model needs: prices, fundamental forecasts and
    actuals (including derived RES / ResLoad), and commodity closes."""

    prices: HourlyPanel
    forecasts: dict[str, HourlyPanel] = field(default_factory=dict)
    actuals: dict[str, HourlyPanel] = field(default_factory=dict)
    commodities: dict[str, CommoditySeries] = field(default_factory=dict)

    def with_derived(self) -> "MarketData":
        """Attach RES and ResLoad to both forecast and actual sets."""
        fc = dict(self.forecasts)
        fc.update(derive_fundamentals(fc["Load"], fc["Solar"], fc["Wind"]))
        act = dict(self.actuals)
        act.update(derive_fundamentals(act["Load"], act["Solar"], act["Wind"]))
        return MarketData(self.prices, fc, act, self.commodities)


# ---------------------------------------------------------------------------
# CSV ingestion / emission.  Canonical schemas:
#   hourly series:        date,hour,value          (hour in 1..24)
#   quarter-hourly:       date,hour,quarter,value  (quarter in 1..4)
#   commodities:          date,value               (trading days only)
# UTF-8, '.' decimal separator, header row required.
# ---------------------------------------------------------------------------

def _check_columns(df: pd.DataFrame, required: tuple, path) -> None:
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise PanelError(f"{path}: missing column(s) {missing}, expected {list(required)}")


def load_hourly_csv(path, name: str = "", repair_dst: bool = True) -> HourlyPanel:
    df = pd.read_csv(path)
    _check_columns(df, ("date", "hour", "value"), path)
    hours = df["hour"].to_numpy()
    if ((hours < 1) | (hours > 24)).any():
        raise PanelError(f"{path}: hour outside 1..24")
    dates = pd.to_datetime(df["date"]).dt.date
    raw = [(dt.datetime.combine(d, dt.time(int(h) - 1)), v)
           for d, h, v in zip(dates, hours, df["value"].to_numpy())]
    if repair_dst:
        return normalize_dst(raw, name)
    first, mat = _repair_slots(raw, 24, name)
    return HourlyPanel(first, mat, name)


def load_quarter_hourly_csv(path, mode: str = "mean", name: str = "",
                            repair_dst: bool = True) -> HourlyPanel:
    df = pd.read_csv(path)
    _check_columns(df, ("date", "hour", "quarter", "value"), path)
    dates = pd.to_datetime(df["date"]).dt.date
    raw = []
    for d, h, q, v in zip(dates, df["hour"].to_numpy(), df["quarter"].to_numpy(),
                          df["value"].to_numpy()):
        if not (1 <= h <= 24 and 1 <= q <= 4):
            raise PanelError(f"{path}: hour/quarter outside range on {d}")
        raw.append((dt.datetime.combine(d, dt.time(int(h) - 1, (int(q) - 1) * 15)), v))
    return aggregate_quarter_hourly(raw, mode=mode, name=name, repair_dst=repair_dst)


def load_commodity_csv(path, name: str = "") -> CommoditySeries:
    df = pd.read_csv(path)
    _check_columns(df, ("date", "value"), path)
    dates = pd.to_datetime(df["date"]).dt.date
    return CommoditySeries.from_items(name, zip(dates, df["value"].to_numpy()))


def write_hourly_csv(panel: HourlyPanel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,hour,value\n")
        for i, day in enumerate(panel.days()):
            row = panel.values[i]
            fh.write("".join(f"{day},{h},{row[h - 1]:.10g}\n" for h in range(1, 25)))


def write_commodity_csv(series: CommoditySeries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,value\n")
        for o, v in zip(series.ordinals, series.closes):
            fh.write(f"{dt.date.fromordinal(int(o))},{v:.10g}\n")
