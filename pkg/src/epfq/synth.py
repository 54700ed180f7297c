"""Synthetic electricity market for tests and demonstrations.

Load, solar and wind are simulated with daily and annual seasonality plus
autocorrelated weather noise; day-ahead point forecasts are the truth plus
heteroskedastic noise whose scale drifts slowly through the year. The price
for each hour is the expected value of a convex merit-order curve over the
uncertain residual load (its day-ahead forecast plus the current error
scale), plus a fuel-cost term tied to the gas random walk, weekday effects
and AR(1) noise. Because the stack is convex, that expectation carries a
premium over the point-forecast price which moves with the forecast
uncertainty - exactly the signal quantile inputs can pick up and point
forecasts cannot.

Everything is drawn from one seeded generator: identical seeds give identical
markets, bit for bit.
"""

from __future__ import annotations

import datetime as dt

import numpy as np

from .panel import CommoditySeries, HourlyPanel, MarketData

# Convex supply stack, residual load in MW -> price in EUR/MWh.
MO_KNOTS_X = np.array([-40000.0, 0.0, 20000.0, 35000.0, 45000.0,
                       52000.0, 58000.0, 63000.0, 68000.0, 95000.0])
_MO_SLOPES = np.array([0.25, 0.9, 2.2, 4.2, 7.0, 11.0, 17.0, 25.0, 40.0]) / 1000.0
MO_KNOTS_Y = np.concatenate(([0.0], np.cumsum(_MO_SLOPES * np.diff(MO_KNOTS_X))))
# anchor MO(0) = 0 EUR/MWh
MO_KNOTS_Y = MO_KNOTS_Y - np.interp(0.0, MO_KNOTS_X, MO_KNOTS_Y)

# Typical system load profile over the day, mean one.
_LOAD_SHAPE = np.array([0.84, 0.80, 0.78, 0.78, 0.81, 0.88, 0.98, 1.06, 1.09,
                        1.10, 1.10, 1.10, 1.08, 1.06, 1.04, 1.03, 1.04, 1.08,
                        1.12, 1.12, 1.08, 1.02, 0.95, 0.88])
_LOAD_SHAPE = _LOAD_SHAPE / _LOAD_SHAPE.mean()

_WEEKDAY_PRICE = np.array([2.0, 1.0, 0.5, 0.5, 1.0, -4.5, -7.0])
_WEEKEND_LOAD = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 0.92, 0.88])


def _ar1(rng, n, phi, sd):
    eps = rng.standard_normal(n) * sd
    out = np.empty(n)
    out[0] = eps[0] / np.sqrt(1 - phi * phi)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + eps[t]
    return out


def merit_order(residual_load):
    return np.interp(residual_load, MO_KNOTS_X, MO_KNOTS_Y)


def generate_synthetic_market(seed: int, n_days: int,
                              first_day: dt.date = dt.date(2015, 1, 1)) -> MarketData:
    """A complete market: prices, fundamentals with forecasts, commodities."""
    if n_days < 10:
        raise ValueError(f"need at least 10 days, got {n_days}")
    rng = np.random.default_rng(seed)
    d = np.arange(n_days)
    h = np.arange(24)
    phase = 2 * np.pi * (d % 365.25) / 365.25       # 0 at the first of January
    dow = (first_day.weekday() + d) % 7

    # --- fundamentals: truth -------------------------------------------------
    load_annual = 1.0 + 0.10 * np.cos(phase)
    load_day = 55000.0 * load_annual * _WEEKEND_LOAD[dow] * (1.0 + _ar1(rng, n_days, 0.85, 0.018))
    load = load_day[:, None] * _LOAD_SHAPE[None, :] \
        * (1.0 + 0.008 * rng.standard_normal((n_days, 24)))

    half = 6.1 - 2.1 * np.cos(phase)                # half day length in hours
    hc = h[None, :] + 0.5
    frac = (hc - (12.0 - half[:, None])) / (2.0 * half[:, None])
    elev = np.where((frac > 0.0) & (frac < 1.0), np.sin(np.pi * np.clip(frac, 0, 1)), 0.0)
    cap = 24000.0 * (1.0 - 0.45 * np.cos(phase))
    cloud = np.clip(0.72 + 0.30 * _ar1(rng, n_days, 0.70, 0.9)
                    + 0.10 * rng.standard_normal(n_days), 0.12, 1.0)
    solar = cap[:, None] * elev ** 1.15 * cloud[:, None]

    wind_level = 12000.0 * (1.0 + 0.30 * np.cos(phase)) * np.exp(_ar1(rng, n_days, 0.92, 0.16))
    wind = np.clip(wind_level[:, None] * (1.0 + 0.08 * rng.standard_normal((n_days, 24))),
                   300.0, 42000.0)

    # --- forecasts: truth plus heteroskedastic noise -------------------------
    # The error scale drifts with the season and a slow AR component, so the
    # conditional uncertainty of fundamentals is genuinely time-varying; with
    # a curved supply stack this makes the fair day-ahead price depend on the
    # current forecast uncertainty, not just on the point forecasts.
    sig_load = 1100.0 * (1.0 + 0.50 * np.sin(phase + 0.7)
                         + 1.10 * _ar1(rng, n_days, 0.996, 0.022))
    sig_load = np.clip(sig_load, 250.0, None)
    sd_load = sig_load[:, None] * (0.6 + 0.4 * _LOAD_SHAPE[None, :])
    load_fc = load + sd_load * rng.standard_normal((n_days, 24))

    sig_sol = np.clip(0.20 * (1.0 + 0.45 * np.sin(phase + 2.1)
                              + 1.10 * _ar1(rng, n_days, 0.996, 0.022)), 0.04, None)
    sun_up = solar > 0.0
    sd_solar = sun_up * sig_sol[:, None] * (0.25 * solar + 0.12 * cap[:, None])
    solar_fc = np.clip(solar + sd_solar * rng.standard_normal((n_days, 24)), 0.0, None)

    sig_wind = np.clip(0.24 * (1.0 + 0.45 * np.sin(phase + 4.0)
                               + 1.10 * _ar1(rng, n_days, 0.996, 0.022)), 0.05, None)
    sd_wind = sig_wind[:, None] * (0.35 * wind + 2200.0)
    wind_fc = np.clip(wind + sd_wind * rng.standard_normal((n_days, 24)), 0.0, None)

    # --- commodities: random walks, quoted on weekdays only ------------------
    walks = {}
    for name, start, vol in (("Coal", 90.0, 0.010), ("Gas", 28.0, 0.014),
                             ("Oil", 75.0, 0.009), ("EUA", 55.0, 0.012)):
        walks[name] = start * np.exp(np.cumsum(rng.standard_normal(n_days) * vol))

    # --- prices ---------------------------------------------------------------
    # The auction clears around the expected merit-order price given day-ahead
    # information: the residual-load point forecast plus its current
    # uncertainty, integrated through the convex stack (Gauss-Hermite).
    # Models fed only point forecasts cannot see the uncertainty part. A
    # share of the realized merit-order price mixes in on top, the way
    # surprises move the auction, so lagged prices are a noisy premium proxy
    # at best.
    resload_fc = load_fc - solar_fc - wind_fc
    sd_resload = np.sqrt(sd_load ** 2 + sd_solar ** 2 + sd_wind ** 2)
    z, wq = np.polynomial.hermite.hermgauss(7)
    wq = wq / np.sqrt(np.pi)
    expected_mo = np.zeros((n_days, 24))
    for zi, wi in zip(z, wq):
        expected_mo += wi * merit_order(resload_fc + np.sqrt(2.0) * sd_resload * zi)
    realized_mo = merit_order(load - solar - wind)
    mo_term = 0.65 * expected_mo + 0.35 * realized_mo
    fuel_term = 0.9 * (walks["Gas"] - walks["Gas"].mean())
    noise = np.empty((n_days, 24))
    for hour in range(24):
        noise[:, hour] = _ar1(rng, n_days, 0.65, 3.2)
    noise += 1.8 * rng.standard_normal((n_days, 24))
    price = mo_term + fuel_term[:, None] + _WEEKDAY_PRICE[dow][:, None] + noise

    days = [first_day + dt.timedelta(days=int(i)) for i in d]
    commodities = {
        name: CommoditySeries.from_items(
            name, [(day, walks[name][i]) for i, day in enumerate(days)
                   if day.weekday() < 5])
        for name in walks
    }
    data = MarketData(
        prices=HourlyPanel(first_day, price, "price"),
        forecasts={"Load": HourlyPanel(first_day, load_fc, "Load"),
                   "Solar": HourlyPanel(first_day, solar_fc, "Solar"),
                   "Wind": HourlyPanel(first_day, wind_fc, "Wind")},
        actuals={"Load": HourlyPanel(first_day, load, "Load"),
                 "Solar": HourlyPanel(first_day, solar, "Solar"),
                 "Wind": HourlyPanel(first_day, wind, "Wind")},
        commodities=commodities,
    )
    return data.with_derived()
