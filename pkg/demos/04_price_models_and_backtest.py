"""
Price models and the rolling backtest
=====================================

Two base structures forecast the day-ahead price of each delivery hour: a
20-variable parsimonious model and a 205-variable cross-hour model. Either
can be extended with quantile forecasts of fundamentals, adding one column
per (variable, probability level).

The backtest refits all 24 hourly models every day on a window that shifts
by one day, exactly as a desk would run it. Takes a minute or two.
"""

import datetime as dt

import numpy as np

from epfq import build_surface, generate_synthetic_market, make_grid
from epfq.evalstat import (cpa_test, daily_rmse_series, rmse_aggregate,
                           rmse_hourly_and_pctchng, selection_frequency)
from epfq.models import parse_spec, rolling_backtest

N, W, OOS = 120, 240, 60
market = generate_synthetic_market(seed=2, n_days=N + W + 40 + OOS)
oos_start = market.prices.first_day + dt.timedelta(days=N + W + 40)
oos_end = oos_start + dt.timedelta(days=OOS - 1)

grid = make_grid("T21", N)
surface = build_surface("ResLoad", market.forecasts["ResLoad"],
                        market.actuals["ResLoad"], "QR", grid, n_window=N,
                        first_day=oos_start - dt.timedelta(days=W),
                        last_day=oos_end)

results = {}
for text in ("Expert", "Expert-QR^ResLoad_T21"):
    spec = parse_spec(text)
    print(f"backtesting {spec.label} ({spec.n_columns} columns) ...")
    results[text] = rolling_backtest(market, {"ResLoad": surface}, spec,
                                     oos_start, oos_end, run_seed=0, window=W)

bench, ext = results["Expert"], results["Expert-QR^ResLoad_T21"]
rmse_b = rmse_aggregate(daily_rmse_series(bench.errors))
rmse_e = rmse_aggregate(daily_rmse_series(ext.errors))
print(f"\naggregate RMSE: benchmark {rmse_b:.3f}, with quantile inputs {rmse_e:.3f} "
      f"({100 * np.log(rmse_e / rmse_b):+.1f}%)")

# --- conditional predictive ability -------------------------------------------
cpa = cpa_test(daily_rmse_series(ext.errors), daily_rmse_series(bench.errors))
print(f"CPA test: statistic {cpa.statistic:.2f}, two-sided p {cpa.p_value:.3f}, "
      f"one-sided p {cpa.p_one_sided:.3f}")

# --- where the improvement lives -----------------------------------------------
pct, _, _ = rmse_hourly_and_pctchng(ext.errors, bench.errors)
best_h = int(np.argmin(pct)) + 1
print(f"hourly %chng: mean {pct.mean():+.1f}%, best hour {best_h} ({pct.min():+.1f}%)")

# --- which quantiles the LASSO keeps ---------------------------------------------
freq = selection_frequency(ext.records, "ResLoad")
by_tau = {}
for (tau, hour), val in freq.items():
    by_tau.setdefault(tau, []).append(val)
print("\nselection frequency of ResLoad quantile inputs (mean over hours):")
for tau in sorted(by_tau)[:3] + sorted(by_tau)[-3:]:
    print(f"  tau={tau:>6.4g}: {np.mean(by_tau[tau]):5.1f}%")
print("extreme levels are kept far more often than the middle of the scale")
