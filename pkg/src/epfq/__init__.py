"""Electricity price forecasting with quantile forecasts of fundamentals.

The pipeline: ingest hourly panels, convert day-ahead point forecasts of
load, solar and wind into quantile forecasts (historical simulation, quantile
regression or a ReLU benchmark transform), feed those as extra regressors
into LASSO-estimated hourly price models, backtest on a rolling window and
evaluate with RMSE and conditional-predictive-ability statistics.
"""

from .panel import (CommoditySeries, HourlyPanel, MarketData, PanelError,
                    aggregate_quarter_hourly, derive_fundamentals,
                    normalize_dst, slice_window, weekday_dummies)
from .postproc import (ProbGrid, PostprocError, QuantileSurface, build_surface,
                       empirical_quantile, fit_qr, hs_forecast, make_grid,
                       qr_forecast, rearrange, relu_transform)
from .lasso import (LassoFit, LassoError, Standardizer, cv_select,
                    fit_coordinate_descent, fit_lasso_cv, lambda_grid,
                    predict, standardize)
from .models import (BacktestResult, DesignMatrix, FeatureRow, ModelError,
                     ModelSpec, apply_solar_exclusion, build_design,
                     expert_row, extend_row, fit_hour_models, hlm_row,
                     parse_spec, rolling_backtest)
from .evalstat import (CpaResult, EvalError, MeritCurve, cpa_test,
                       demo_supply_stack, group_impact, jensen_gap,
                       rmse_aggregate, rmse_daily, rmse_hourly_and_pctchng,
                       selection_frequency)
from .synth import generate_synthetic_market

__version__ = "0.1.0"
