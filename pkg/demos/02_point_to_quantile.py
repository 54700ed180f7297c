"""
From point forecasts to quantile forecasts
==========================================

Day-ahead load, solar and wind predictions are published as single numbers.
This script turns them into quantile forecasts three ways and compares the
resulting bands:

  * historical simulation (HS): shift the point forecast by empirical
    quantiles of its own past errors;
  * quantile regression (QR): per hour and probability level, the exact
    check-loss-minimising line through past (forecast, actual) pairs;
  * the ReLU transform: max(point forecast, past-forecast quantiles), a
    benchmark nonlinearity that is deliberately *not* a quantile forecast.
"""

import datetime as dt

import numpy as np

from epfq import build_surface, generate_synthetic_market, make_grid

market = generate_synthetic_market(seed=3, n_days=260)
N = 120
grid = make_grid("T11", N)
print("probability grid:", np.round(grid.levels, 4))
print("gamma = 1/(2N) =", grid.gamma)

surfaces = {}
for method in ("HS", "QR", "ReLU"):
    surfaces[method] = build_surface(
        "Wind", market.forecasts["Wind"], market.actuals["Wind"],
        method, grid, n_window=N)

day = surfaces["HS"].first_day + dt.timedelta(days=100)
hour = 14
point = market.forecasts["Wind"].get(day, hour)
actual = market.actuals["Wind"].get(day, hour)
print(f"\nwind, {day} hour {hour}: point forecast {point:.0f} MW, actual {actual:.0f} MW")
for method, surf in surfaces.items():
    q = surf.quantiles(day, hour)
    print(f"  {method:4s}: 10%..90% band [{q[1]:8.0f}, {q[-2]:8.0f}]  "
          f"median {q[5]:8.0f}")

# The ReLU output is bounded below by the point forecast itself - it encodes
# no downside uncertainty, which is exactly why it serves as the benchmark.
q_relu = surfaces["ReLU"].quantiles(day, hour)
assert (q_relu >= point - 1e-9).all()

# --- calibration check -------------------------------------------------------
# A quantile forecast is useful when the actual falls below the tau-quantile
# about tau of the time. Count hits over the whole surface (interior levels).

print("\nempirical coverage over all days and hours:")
i0 = market.forecasts["Wind"].index(surfaces["HS"].first_day)
actuals = market.actuals["Wind"].values[i0:i0 + surfaces["HS"].n_days]
for method in ("HS", "QR"):
    cover = (actuals[:, :, None] < surfaces[method].values).mean(axis=(0, 1))
    line = "  ".join(f"{grid.levels[t]:.1f}:{cover[t]:.2f}" for t in (1, 3, 5, 7, 9))
    print(f"  {method:4s}: {line}")

# --- quantile crossing -------------------------------------------------------
# QR fits every level independently, so raw lines can cross; the surface
# sorts each vector (rearrangement) and truncates nonnegative variables at 0.

assert (np.diff(surfaces["QR"].values, axis=-1) >= 0).all()
assert (surfaces["QR"].values >= 0).all()
print("\nQR surface is monotone across levels and nonnegative for wind")
