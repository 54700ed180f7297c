import datetime as dt
import itertools

import numpy as np
import pytest

import epfq
from epfq.models import (BASE_SIZES, VARIABLE_SETS, DesignMatrix, ModelError,
                         ModelSpec, apply_solar_exclusion, build_design,
                         build_row, expert_row, extend_row, fit_hour_models,
                         first_feasible_day, hlm_row, parse_spec,
                         rolling_backtest)
from epfq.postproc import GRID_SIZES


def surfaces_for(market_surfaces, spec):
    return {var: market_surfaces[(var, spec.postproc)] for var in spec.variables}


class TestModelSpec:
    def test_parse_round_trip(self):
        for text in ("Expert", "HLM", "HLM-QR^ResLoad_T201", "Expert-HS^Load+RES_T5",
                     "Expert-ReLU^Load+Solar+Wind_T21"):
            assert parse_spec(text).label == text

    def test_braced_comma_form(self):
        spec = parse_spec("HLM-QR^{Load, RES}_T201")
        assert spec.varset == "Load+RES"

    def test_bad_strings(self):
        for text in ("LEAR", "HLM-QR^Load", "HLM-XX^Load_T5", "HLM-QR^Price_T5",
                     "HLM-QR^Load_T13"):
            with pytest.raises(ModelError):
                parse_spec(text)

    def test_partial_options_rejected(self):
        with pytest.raises(ModelError):
            ModelSpec("Expert", postproc="QR")

    def test_column_count_formula_all_294_specs(self):
        counts = []
        for base, post, varset, grid in itertools.product(
                BASE_SIZES, ("HS", "QR", "ReLU"), VARIABLE_SETS, GRID_SIZES):
            spec = ModelSpec(base, post, varset, grid)
            expected = BASE_SIZES[base] + len(VARIABLE_SETS[varset]) * GRID_SIZES[grid]
            assert spec.n_columns == expected
            counts.append(spec.n_columns)
        assert len(counts) == 294
        assert max(counts) == 808
        assert parse_spec("HLM-QR^Load+Solar+Wind_T201").n_columns == 808


class TestExpertRow:
    def test_count_and_names_unique(self, market):
        day = market.prices.first_day + dt.timedelta(days=10)
        row = expert_row(market, day, 5)
        assert len(row.names) == 20

    def test_constant_price_history(self, market):
        from epfq.panel import HourlyPanel
        flat = epfq.MarketData(
            prices=HourlyPanel(market.prices.first_day,
                               np.full_like(market.prices.values, 42.0)),
            forecasts=market.forecasts, actuals=market.actuals,
            commodities=market.commodities)
        row = expert_row(flat, market.prices.first_day + dt.timedelta(days=10), 7)
        vals = dict(zip(row.names, row.values))
        for nm in ("price_lag1", "price_lag2", "price_lag7", "price_last_hour",
                   "price_min_prev", "price_max_prev"):
            assert vals[nm] == 42.0

    def test_monday_one_hot(self, market):
        day = market.prices.first_day
        while day.weekday() != 0:
            day += dt.timedelta(days=1)
        day += dt.timedelta(days=7)
        row = expert_row(market, day, 1)
        vals = dict(zip(row.names, row.values))
        assert vals["dummy_mon"] == 1.0
        assert sum(vals[f"dummy_{d}"] for d in ("tue", "wed", "thu", "fri", "sat", "sun")) == 0.0

    def test_commodity_backward_roll(self, market):
        day = market.prices.first_day + dt.timedelta(days=9)
        while (day - dt.timedelta(days=2)).weekday() != 6:   # d-2 on a Sunday
            day += dt.timedelta(days=1)
        row = expert_row(market, day, 1)
        vals = dict(zip(row.names, row.values))
        assert vals["gas_close"] == market.commodities["Gas"].lookup(day)

    def test_missing_lag_errors(self, market):
        with pytest.raises(Exception, match="needs prices"):
            expert_row(market, market.prices.first_day + dt.timedelta(days=3), 1)


class TestHlmRow:
    def test_count_205(self, market):
        day = market.prices.first_day + dt.timedelta(days=10)
        row = hlm_row(market, day, 1)
        assert len(row.names) == 205

    def test_hour_independent(self, market):
        day = market.prices.first_day + dt.timedelta(days=10)
        r1 = hlm_row(market, day, 1)
        r13 = hlm_row(market, day, 13)
        np.testing.assert_array_equal(r1.values, r13.values)
        assert r1.names == r13.names

    def test_max_column_is_max_of_lag_columns(self, market):
        day = market.prices.first_day + dt.timedelta(days=10)
        row = hlm_row(market, day, 1)
        vals = dict(zip(row.names, row.values))
        lag1 = [vals[f"price_lag1_h{h:02d}"] for h in range(1, 25)]
        assert vals["price_max_prev"] == max(lag1)
        assert vals["price_min_prev"] == min(lag1)


class TestExtendRow:
    def test_largest_spec_808(self, market, market_surfaces):
        spec = parse_spec("HLM-QR^Load+Solar+Wind_T11")
        day = market.prices.first_day + dt.timedelta(days=70)
        row = build_row(market, surfaces_for(market_surfaces, spec), spec, day, 12)
        assert len(row.names) == 205 + 3 * 11

    def test_expert_hs_resload(self, market, market_surfaces):
        spec = parse_spec("Expert-HS^ResLoad_T11")
        day = market.prices.first_day + dt.timedelta(days=70)
        row = build_row(market, surfaces_for(market_surfaces, spec), spec, day, 12)
        assert len(row.names) == 20 + 11

    def test_benchmark_unchanged(self, market, market_surfaces):
        spec = parse_spec("Expert")
        day = market.prices.first_day + dt.timedelta(days=70)
        base = expert_row(market, day, 3)
        assert extend_row(base, {}, spec, day, 3) is base

    def test_grid_mismatch_errors(self, market, market_surfaces):
        spec = parse_spec("Expert-QR^Load_T5")   # surfaces fixture built T11
        day = market.prices.first_day + dt.timedelta(days=70)
        base = expert_row(market, day, 3)
        with pytest.raises(ModelError, match="spec needs"):
            extend_row(base, surfaces_for(market_surfaces, spec), spec, day, 3)

    def test_quantile_values_come_from_surface(self, market, market_surfaces):
        spec = parse_spec("Expert-QR^Wind_T11")
        surf = market_surfaces[("Wind", "QR")]
        day = market.prices.first_day + dt.timedelta(days=70)
        row = build_row(market, {"Wind": surf}, spec, day, 9)
        np.testing.assert_array_equal(row.values[-11:], surf.quantiles(day, 9))

    def test_benchmark_columns_are_subset_of_extended(self, market, market_surfaces):
        for base in ("Expert", "HLM"):
            bench = parse_spec(base)
            ext = parse_spec(f"{base}-QR^Load+RES_T11")
            day = market.prices.first_day + dt.timedelta(days=70)
            row_b = build_row(market, {}, bench, day, 4)
            row_e = build_row(market, surfaces_for(market_surfaces, ext), ext, day, 4)
            assert row_e.names[:len(row_b.names)] == row_b.names
            np.testing.assert_array_equal(row_e.values[:len(row_b.names)], row_b.values)


class TestSolarExclusion:
    def make_matrix(self, zero_share, n=100):
        rng = np.random.default_rng(0)
        solar = rng.uniform(1, 10, n)
        solar[:int(round(zero_share * n))] = 0.0
        X = np.column_stack([rng.standard_normal(n), solar, rng.standard_normal(n)])
        return DesignMatrix(["load_hat", "solar_hat", "wind_hat"], X, np.zeros(n), hour=7)

    def test_night_hour_dropped(self):
        out = apply_solar_exclusion(self.make_matrix(1.0))
        assert "solar_hat" not in out.names
        assert "solar_hat" in out.dropped

    def test_midday_kept(self):
        out = apply_solar_exclusion(self.make_matrix(0.0))
        assert "solar_hat" in out.names

    def test_exactly_25_percent_kept(self):
        out = apply_solar_exclusion(self.make_matrix(0.25))
        assert "solar_hat" in out.names     # strictly more than 25% drops

    def test_just_over_25_percent_dropped(self):
        out = apply_solar_exclusion(self.make_matrix(0.26))
        assert "solar_hat" not in out.names

    def test_quantile_columns_inherit(self):
        rng = np.random.default_rng(1)
        n = 100
        X = np.column_stack([np.zeros(n), rng.standard_normal(n), rng.standard_normal(n)])
        dm = DesignMatrix(["solar_hat", "solar_q0.5", "load_hat"], X, np.zeros(n), hour=4)
        out = apply_solar_exclusion(dm)
        assert out.names == ["load_hat"]
        assert "inherited" in out.dropped["solar_q0.5"]


class TestFitHourModels:
    def test_bank_of_24_and_determinism(self, market, market_surfaces):
        spec = parse_spec("Expert-QR^ResLoad_T11")
        surfs = surfaces_for(market_surfaces, spec)
        day = market.prices.last_day - dt.timedelta(days=2)
        bank1 = fit_hour_models(market, surfs, spec, day, run_seed=5, window=120)
        bank2 = fit_hour_models(market, surfs, spec, day, run_seed=5, window=120)
        assert len(bank1) == 24
        assert [r.hour for r in bank1] == list(range(1, 25))
        for a, b in zip(bank1, bank2):
            assert a.prediction == b.prediction
            np.testing.assert_array_equal(a.fit.coef, b.fit.coef)

    def test_window_underflow_errors(self, market, market_surfaces):
        spec = parse_spec("Expert")
        with pytest.raises(Exception):
            fit_hour_models(market, {}, spec, market.prices.first_day + dt.timedelta(days=50),
                            window=120)

    def test_first_feasible_day_arithmetic(self, market):
        surface_first = market.prices.first_day + dt.timedelta(days=60)
        feasible = first_feasible_day(market, surface_first, window=120)
        assert feasible == surface_first + dt.timedelta(days=120)
        # price lags need 7 days of history too
        tight = first_feasible_day(market, market.prices.first_day, window=5)
        assert tight == market.prices.first_day + dt.timedelta(days=12)


class TestRollingBacktest:
    def test_window_shifts_one_day(self, market, market_surfaces):
        """Fits for consecutive days use calibration windows offset by one."""
        spec = parse_spec("Expert")
        start = market.prices.last_day - dt.timedelta(days=1)
        res = rolling_backtest(market, {}, spec, start, market.prices.last_day,
                               run_seed=0, window=100)
        assert res.forecasts.n_days == 2
        assert len(res.records) == 48

    def test_single_day_range(self, market):
        spec = parse_spec("HLM")
        day = market.prices.last_day
        res = rolling_backtest(market, {}, spec, day, day, run_seed=0, window=100)
        assert res.forecasts.n_days == 1
        assert np.isfinite(res.forecasts.values).all()

    def test_reproducible_bit_identical(self, market, market_surfaces):
        spec = parse_spec("Expert-HS^RES_T11")
        surfs = surfaces_for(market_surfaces, spec)
        start = market.prices.last_day - dt.timedelta(days=2)
        a = rolling_backtest(market, surfs, spec, start, market.prices.last_day,
                             run_seed=3, window=100)
        b = rolling_backtest(market, surfs, spec, start, market.prices.last_day,
                             run_seed=3, window=100)
        np.testing.assert_array_equal(a.forecasts.values, b.forecasts.values)

    def test_no_lookahead(self, market, market_surfaces):
        """Garbling data after the forecast day leaves its forecast unchanged."""
        from epfq.panel import HourlyPanel, MarketData
        spec = parse_spec("Expert")
        day = market.prices.last_day - dt.timedelta(days=5)
        res1 = rolling_backtest(market, {}, spec, day, day, run_seed=1, window=100)
        i = market.prices.index(day)
        prices = market.prices.values.copy()
        rng = np.random.default_rng(0)
        prices[i:] = 1e4 * rng.random(prices[i:].shape)   # actuals of day d and later
        garbled = MarketData(
            HourlyPanel(market.prices.first_day, prices),
            market.forecasts, market.actuals, market.commodities)
        res2 = rolling_backtest(garbled, {}, spec, day, day, run_seed=1, window=100)
        np.testing.assert_allclose(res1.forecasts.values, res2.forecasts.values, rtol=1e-12)

    def test_errors_are_actual_minus_forecast(self, market):
        spec = parse_spec("Expert")
        day = market.prices.last_day
        res = rolling_backtest(market, {}, spec, day, day, run_seed=0, window=100)
        np.testing.assert_allclose(
            res.errors, res.actuals.values - res.forecasts.values)

    def test_design_tensor_matches_row_ops(self, market, market_surfaces):
        spec = parse_spec("HLM-QR^Load_T11")
        surfs = surfaces_for(market_surfaces, spec)
        first = market.prices.first_day + dt.timedelta(days=80)
        last = first + dt.timedelta(days=3)
        design = build_design(market, surfs, spec, first, last)
        for day in (first, last):
            for hour in (1, 13, 24):
                row = build_row(market, surfs, spec, day, hour)
                assert row.names == design.names
                np.testing.assert_allclose(
                    design.tensor[design.index(day), hour - 1], row.values, rtol=1e-12)
