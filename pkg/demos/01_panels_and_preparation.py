"""
Hourly panels and data preparation
==================================

Every series in this package lives in an HourlyPanel: a rectangular
[days x 24] matrix with a calendar attached. This script walks through the
ingestion helpers: the clock-change repair, quarter-hour aggregation,
derived fundamentals and window slicing.
"""

import datetime as dt

import numpy as np

from epfq import (aggregate_quarter_hourly, generate_synthetic_market,
                  normalize_dst, slice_window)

# --- the clock-change repair ------------------------------------------------
# Build one day of hourly observations with the spring pattern (an hour
# missing) and the autumn pattern (an hour doubled).

day = dt.date(2021, 3, 28)
raw = []
for h in range(24):
    if h == 2:
        continue                      # spring: 02:00 does not exist
    raw.append((dt.datetime.combine(day, dt.time(h)), float(10 + h)))
raw.append((dt.datetime.combine(day, dt.time(3)), 99.0))   # autumn-style double

panel = normalize_dst(raw, name="demo")
print("repaired day:", np.round(panel.values[0, :6], 2))
print("02:00 became the mean of its neighbours,",
      "03:00 the mean of its two values")

# --- quarter-hourly aggregation ----------------------------------------------
quarters = []
for h in range(24):
    for q in range(4):
        quarters.append((dt.datetime.combine(day, dt.time(h, q * 15)),
                         float(100 * h + q)))
hourly = aggregate_quarter_hourly(quarters, mode="mean")
print("\nhour 0 from quarters (0,1,2,3):", hourly.values[0, 0])

# --- derived fundamentals ---------------------------------------------------
# RES = solar + wind, ResLoad = load - RES. ResLoad may go negative: on windy
# sunny days renewables can exceed demand.

market = generate_synthetic_market(seed=1, n_days=120)
res = market.actuals["RES"]
resload = market.actuals["ResLoad"]
print("\nRES mean (MW):", round(res.values.mean()))
print("ResLoad range (MW):", round(resload.values.min()), "to",
      round(resload.values.max()))

# --- window slicing ----------------------------------------------------------
# Rolling calibration windows are just day slices. The two halves of a window
# concatenate exactly to the full window.

end = market.prices.first_day + dt.timedelta(days=99)
half1 = slice_window(market.prices, end - dt.timedelta(days=10), 10)
half2 = slice_window(market.prices, end, 10)
full = slice_window(market.prices, end, 20)
assert np.array_equal(np.vstack([half1.values, half2.values]), full.values)
print("\n20-day window =", half1.n_days, "+", half2.n_days, "day slices, row-exact")

# --- commodity lookups -------------------------------------------------------
# Closing prices roll backward over non-trading days: asking for the close of
# day d-2 on a Monday returns Friday's quote.

gas = market.commodities["Gas"]
monday = next(d for d in market.prices.days()[10:] if d.weekday() == 0)
print("\ngas close used when forecasting a Monday:",
      round(gas.lookup(monday), 2), "(quote from the previous Thursday)")
