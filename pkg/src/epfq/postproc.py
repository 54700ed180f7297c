"""Quantile forecasts of fundamentals from day-ahead point forecasts.

Three transforms are supported. Historical simulation (HS) shifts the point
forecast by empirical quantiles of past point-forecast errors. Quantile
regression (QR) fits, per hour and probability level, the line through the
(forecast, actual) cloud that minimises the check loss; the two-parameter
problem is solved exactly by enumerating candidate lines through sample-point
pairs. The ReLU transform takes the elementwise maximum of the point forecast
and empirical quantiles of past forecasts; it is a benchmark nonlinearity,
not a quantile forecast.

Windows respect publication timing: when forecasting day d (on day d-1),
actual observations exist only up to d-2, so HS and QR train on days
[d-N, d-2] while ReLU, needing forecasts only, may use [d-N, d-1].
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .panel import NONNEGATIVE_VARIABLES, HourlyPanel, PanelError

MIN_FIT_WINDOW = 30   # guards the gamma-quantile on tiny samples

GRID_SIZES = {"T5": 5, "T7": 7, "T11": 11, "T21": 21, "T51": 51, "T101": 101, "T201": 201}

_INTERIOR = {
    "T5": np.array([0.1, 0.5, 0.9]),
    "T7": np.array([0.1, 0.3, 0.5, 0.7, 0.9]),
    "T11": np.arange(1, 10) / 10,
    "T21": np.arange(5, 100, 5) / 100,
    "T51": np.arange(2, 100, 2) / 100,
    "T101": np.arange(1, 100) / 100,
    "T201": np.arange(5, 1000, 5) / 1000,
}


class PostprocError(ValueError):
    pass


@dataclass(frozen=True)
class ProbGrid:
    """Ordered probability levels with extreme quantiles gamma and 1-gamma."""

    label: str
    levels: np.ndarray
    gamma: float

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @property
    def size(self) -> int:
        return self.levels.shape[0]


def make_grid(label: str, n_window: int) -> ProbGrid:
    """Probability grid for a given label and calibration-window length.

    The endpoints gamma = 1/(2N) and 1 - gamma stand in for the minimum and
    maximum of the predicted variable. A window too short for the requested
    grid (gamma colliding with the interior levels) is an error.
    """
    if label not in _INTERIOR:
        raise PostprocError(f"unknown grid label '{label}', valid: {sorted(GRID_SIZES)}")
    if n_window < 2:
        raise PostprocError(f"window length must be >= 2, got {n_window}")
    gamma = 1.0 / (2.0 * n_window)
    levels = np.concatenate(([gamma], _INTERIOR[label], [1.0 - gamma]))
    if not (np.diff(levels) > 0).all():
        raise PostprocError(
            f"grid {label} impossible for window {n_window}: gamma={gamma:g} "
            "collides with interior levels")
    grid = ProbGrid(label, levels, gamma)
    assert grid.size == GRID_SIZES[label]
    return grid


def _interp_quantiles(sorted_values: np.ndarray, taus: np.ndarray) -> np.ndarray:
    """Order-statistic quantiles, linear interpolation at rank (m-1)*tau + 1.

    ``sorted_values`` must be ascending along the last axis; output appends a
    tau axis.
    """
    m = sorted_values.shape[-1]
    pos = (m - 1) * np.asarray(taus, dtype=float)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, m - 1)
    w = pos - lo
    return sorted_values[..., lo] * (1.0 - w) + sorted_values[..., hi] * w


def empirical_quantile(sample, tau: float) -> float:
    sample = np.asarray(sample, dtype=float).ravel()
    if sample.size == 0:
        raise PostprocError("empirical quantile of an empty sample")
    if not 0.0 < tau < 1.0:
        raise PostprocError(f"tau must be in (0,1), got {tau}")
    return float(_interp_quantiles(np.sort(sample), np.array([tau]))[0])


def rearrange(vector) -> np.ndarray:
    """Sort a quantile vector ascending, fixing any quantile crossing."""
    return np.sort(np.asarray(vector, dtype=float))


def hs_forecast(point_fc: float, error_window, grid: ProbGrid) -> np.ndarray:
    """Point forecast plus empirical quantiles of past forecast errors."""
    errors = np.asarray(error_window, dtype=float).ravel()
    if errors.size < MIN_FIT_WINDOW:
        raise PostprocError(
            f"error window of {errors.size} days is below the minimum of {MIN_FIT_WINDOW}")
    return point_fc + _interp_quantiles(np.sort(errors), grid.levels)


class QrFit(NamedTuple):
    beta0: float
    beta1: float
    degenerate: bool


def fit_qr(x_hat, x, tau: float) -> QrFit:
    """Exact two-parameter quantile regression of ``x`` on ``x_hat``.

    Enumerates every line through two sample points with distinct regressor
    values and returns the one minimising the check loss (a minimiser of this
    piecewise-linear convex problem always interpolates two points). When all
    regressor values coincide, falls back to the intercept-only empirical
    quantile and flags the fit.
    """
    xf = np.ascontiguousarray(x_hat, dtype=float).ravel()
    xa = np.ascontiguousarray(x, dtype=float).ravel()
    if xf.shape != xa.shape or xf.size < 2:
        raise PostprocError("fit_qr needs two aligned samples of length >= 2")
    if not 0.0 < tau < 1.0:
        raise PostprocError(f"tau must be in (0,1), got {tau}")
    b0, b1, degenerate = _kernels.qr_fit_single(xf, xa, np.array([tau]))
    if degenerate:
        return QrFit(empirical_quantile(xa, tau), 0.0, True)
    return QrFit(float(b0[0]), float(b1[0]), False)


def check_loss(q, x, tau: float):
    """Pinball loss QL_tau(q, x) = (1{x<q} - tau) * (q - x)."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    return ((x < q).astype(float) - tau) * (q - x)


def qr_forecast(coeffs, point_fc: float, grid: ProbGrid) -> np.ndarray:
    """Evaluate per-tau QR coefficients at a point forecast and rearrange.

    ``coeffs`` is a sequence of (beta0, beta1) pairs aligned with the grid.
    """
    co = np.asarray(coeffs, dtype=float)
    if co.shape != (grid.size, 2):
        raise PostprocError(f"need one (beta0, beta1) pair per level, got {co.shape}")
    return rearrange(co[:, 0] + co[:, 1] * point_fc)


def relu_transform(point_fc: float, forecast_window, grid: ProbGrid) -> np.ndarray:
    """max(point forecast, empirical quantiles of past point forecasts).

    Not a quantile forecast of the variable; used to test whether price-model
    gains come from probabilistic information or from mere nonlinearity.
    """
    window = np.asarray(forecast_window, dtype=float).ravel()
    if window.size == 0:
        raise PostprocError("ReLU transform with an empty forecast window")
    return np.maximum(point_fc, _interp_quantiles(np.sort(window), grid.levels))


@dataclass(frozen=True)
class QuantileSurface:
    """Quantile forecasts for one variable: [n_days x 24 x n_levels].

    ``untrained`` marks (day, hour) slots that were deliberately not fitted
    (solar hours with a zero point forecast); ``qr_fallback`` marks slots
    where a degenerate QR window fell back to the intercept-only quantile.
    """

    variable: str
    grid: ProbGrid
    method: str
    first_day: dt.date
    values: np.ndarray
    untrained: np.ndarray = None
    qr_fallback: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1] != 24 or v.shape[2] != self.grid.size:
            raise PostprocError(f"surface must be [n_days x 24 x {self.grid.size}]")
        object.__setattr__(self, "values", v)
        for attr in ("untrained", "qr_fallback"):
            m = getattr(self, attr)
            if m is None:
                m = np.zeros(v.shape[:2], dtype=bool)
            object.__setattr__(self, attr, np.asarray(m, dtype=bool))

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def last_day(self) -> dt.date:
        return self.first_day + dt.timedelta(days=self.n_days - 1)

    def index(self, day: dt.date) -> int:
        i = (day - self.first_day).days
        if not 0 <= i < self.n_days:
            raise PostprocError(f"day {day} outside surface [{self.first_day}, {self.last_day}]")
        return i

    def quantiles(self, day: dt.date, hour: int) -> np.ndarray:
        return self.values[self.index(day), hour - 1]


def build_surface(variable: str, point_fc: HourlyPanel, actuals: HourlyPanel,
                  method: str, grid: ProbGrid, n_window: int = 364,
                  first_day: dt.date = None, last_day: dt.date = None) -> QuantileSurface:
    """Quantile surface for every requested day and hour.

    HS and QR train per hour on the rolling window [d-N, d-2]; ReLU uses the
    point forecasts over [d-N, d-1]. Raw quantile vectors are rearranged
    (sorted) and, for variables that cannot be negative, truncated at zero.
    Solar hours with a zero point forecast are emitted as all-zero vectors and
    flagged as untrained.
    """
    if method not in ("HS", "QR", "ReLU"):
        raise PostprocError(f"unknown postprocessing method '{method}'")
    if point_fc.first_day != actuals.first_day or point_fc.n_days != actuals.n_days:
        raise PanelError("forecast and actual panels cover different day ranges")
    fc = point_fc.values
    ac = actuals.values
    n_fit = n_window - 1 if method in ("HS", "QR") else n_window
    if n_fit < MIN_FIT_WINDOW:
        raise PostprocError(
            f"{method} fit window of {n_fit} days is below the minimum of {MIN_FIT_WINDOW}")

    if first_day is None:
        first_day = point_fc.first_day + dt.timedelta(days=n_window)
    if last_day is None:
        last_day = point_fc.last_day
    o0 = (first_day - point_fc.first_day).days
    n_out = (last_day - first_day).days + 1
    if n_out < 1:
        raise PostprocError(f"empty day range [{first_day}, {last_day}]")
    if o0 < n_window:
        raise PostprocError(
            f"insufficient history: surface for {first_day} needs data from "
            f"{first_day - dt.timedelta(days=n_window)} but panel starts {point_fc.first_day}")
    if o0 + n_out > point_fc.n_days:
        raise PostprocError(f"panel ends {point_fc.last_day}, cannot cover {last_day}")

    taus = grid.levels
    fc_out = fc[o0:o0 + n_out]
    qr_fallback = np.zeros((n_out, 24), dtype=bool)

    if method == "HS":
        win = sliding_window_view(ac - fc, n_fit, axis=0)[o0 - n_window:o0 - n_window + n_out]
        vals = fc_out[:, :, None] + _interp_quantiles(np.sort(win, axis=-1), taus)
    elif method == "ReLU":
        win = sliding_window_view(fc, n_fit, axis=0)[o0 - n_window:o0 - n_window + n_out]
        vals = np.maximum(fc_out[:, :, None],
                          _interp_quantiles(np.sort(win, axis=-1), taus))
    else:
        vals = np.empty((n_out, 24, grid.size))
        for h in range(24):
            xf = np.ascontiguousarray(fc[:, h])
            xa = np.ascontiguousarray(ac[:, h])
            b0, b1, degen = _kernels.qr_fit_windows(xf, xa, o0, n_out, n_window, taus)
            vals[:, h, :] = b0 + b1 * fc_out[:, h:h + 1]
            if degen.any():
                qr_fallback[:, h] = degen
                for o in np.flatnonzero(degen):
                    sample = np.sort(xa[o0 + o - n_window:o0 + o - 1])
                    vals[o, h, :] = _interp_quantiles(sample, taus)

    vals = np.sort(vals, axis=-1)
    if variable in NONNEGATIVE_VARIABLES:
        np.maximum(vals, 0.0, out=vals)

    untrained = np.zeros((n_out, 24), dtype=bool)
    if variable == "Solar":
        untrained = fc_out == 0.0
        vals[untrained] = 0.0

    return QuantileSurface(variable, grid, method, first_day, vals, untrained, qr_fallback)


# ---------------------------------------------------------------------------
# CSV round trip: long format (date, hour, tau, value, method, variable).
# ---------------------------------------------------------------------------

def write_surface_csv(surface: QuantileSurface, path) -> None:
    taus = surface.grid.levels
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,hour,tau,value,method,variable\n")
        for i in range(surface.n_days):
            day = surface.first_day + dt.timedelta(days=i)
            for h in range(24):
                row = surface.values[i, h]
                fh.write("".join(
                    f"{day},{h + 1},{taus[t]:.10g},{row[t]:.10g},"
                    f"{surface.method},{surface.variable}\n"
                    for t in range(taus.shape[0])))


def read_surface_csv(path) -> QuantileSurface:
    df = pd.read_csv(path)
    taus = np.sort(df["tau"].unique())
    label = f"T{taus.size}"
    if label not in GRID_SIZES:
        raise PostprocError(f"{path}: {taus.size} levels do not match any known grid")
    grid = ProbGrid(label, taus, float(taus[0]))
    days = pd.to_datetime(df["date"]).dt.date
    first = days.min()
    n_days = (days.max() - first).days + 1
    vals = np.full((n_days, 24, taus.size), np.nan)
    tau_pos = {round(t, 12): k for k, t in enumerate(taus)}
    di = np.array([(d - first).days for d in days])
    hi = df["hour"].to_numpy() - 1
    ti = np.array([tau_pos[round(t, 12)] for t in df["tau"].to_numpy()])
    vals[di, hi, ti] = df["value"].to_numpy()
    if np.isnan(vals).any():
        raise PostprocError(f"{path}: surface has holes")
    return QuantileSurface(str(df["variable"].iloc[0]), grid, str(df["method"].iloc[0]),
                           first, vals)
