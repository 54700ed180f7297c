import datetime as dt
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import epfq
from epfq.postproc import (GRID_SIZES, PostprocError, build_surface, check_loss,
                           empirical_quantile, fit_qr, hs_forecast, make_grid,
                           qr_forecast, read_surface_csv, rearrange,
                           relu_transform, write_surface_csv)
from conftest import pinball


def brute_force_qr(x_hat, x, tau):
    """Independent oracle: scan every two-point candidate line directly."""
    best = (None, None, np.inf)
    for i, j in itertools.combinations(range(len(x_hat)), 2):
        if x_hat[i] == x_hat[j]:
            continue
        b1 = (x[i] - x[j]) / (x_hat[i] - x_hat[j])
        b0 = x[i] - b1 * x_hat[i]
        obj = pinball(b0 + b1 * np.asarray(x_hat), x, tau).sum()
        if obj < best[2]:
            best = (b0, b1, obj)
    return best


class TestMakeGrid:
    def test_t5_paper_window(self):
        grid = make_grid("T5", 364)
        np.testing.assert_allclose(grid.levels, [1 / 728, 0.1, 0.5, 0.9, 727 / 728])
        assert grid.gamma == 1 / 728

    def test_t201_endpoints_and_size(self):
        grid = make_grid("T201", 364)
        assert grid.size == 201
        assert grid.levels[0] == 1 / 728
        assert grid.levels[-1] == 727 / 728
        assert (np.diff(grid.levels) > 0).all()

    @pytest.mark.parametrize("label,size", sorted(GRID_SIZES.items()))
    def test_all_sizes(self, label, size):
        grid = make_grid(label, 364)
        assert grid.size == size
        assert grid.levels[0] == grid.gamma
        assert grid.levels[-1] == 1 - grid.gamma

    def test_impossible_grid_errors(self):
        with pytest.raises(PostprocError, match="collides"):
            make_grid("T11", 2)   # gamma = 0.25 > 0.1

    def test_unknown_label(self):
        with pytest.raises(PostprocError, match="unknown grid"):
            make_grid("T13", 364)


class TestEmpiricalQuantile:
    def test_median_of_odd_sample(self):
        assert empirical_quantile([1, 2, 3, 4, 5], 0.5) == 3.0

    def test_interpolation_rule(self):
        # rank (n-1)*tau + 1 = 1.25 -> 0 + 0.25 * (10 - 0)
        assert empirical_quantile([0, 10], 0.25) == 2.5

    def test_singleton(self):
        assert empirical_quantile([7.0], 0.1) == 7.0
        assert empirical_quantile([7.0], 0.9) == 7.0

    def test_empty_errors(self):
        with pytest.raises(PostprocError):
            empirical_quantile([], 0.5)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60),
           st.floats(0.01, 0.99))
    @settings(max_examples=80, deadline=None)
    def test_matches_reference_implementation(self, sample, tau):
        ours = empirical_quantile(sample, tau)
        ref = float(np.quantile(np.array(sample), tau))
        assert ours == pytest.approx(ref, rel=1e-12, abs=1e-9)


class TestHsForecast:
    def test_zero_errors_give_point_forecast(self):
        grid = make_grid("T11", 60)
        out = hs_forecast(100.0, np.zeros(59), grid)
        np.testing.assert_array_equal(out, np.full(grid.size, 100.0))

    def test_symmetric_median(self):
        grid = make_grid("T5", 60)
        errors = np.concatenate([-np.arange(1, 30), [0], np.arange(1, 30)])
        out = hs_forecast(100.0, errors, grid)
        assert out[2] == pytest.approx(100.0)   # tau = 0.5

    def test_additive_definition(self):
        grid = make_grid("T5", 60)
        errors = np.linspace(-10, 10, 59)
        out = hs_forecast(50.0, errors, grid)
        q9 = empirical_quantile(errors, 0.9)
        assert out[3] == pytest.approx(50.0 + q9)

    def test_short_window_errors(self):
        grid = make_grid("T5", 60)
        with pytest.raises(PostprocError, match="minimum"):
            hs_forecast(1.0, np.zeros(29), grid)

    def test_hs_coverage_synthetic(self):
        """x = x_hat + eps with iid continuous errors: empirical coverage of
        the HS tau-quantile approaches tau (binomial check, interior taus)."""
        rng = np.random.default_rng(11)
        n_eval, n_win = 800, 364
        windows = rng.standard_normal((n_eval, n_win))
        new = rng.standard_normal(n_eval)
        for tau in (0.1, 0.5, 0.9):
            q = np.quantile(windows, tau, axis=1)
            cover = float(np.mean(new < q))
            halfwidth = 2.576 * np.sqrt(tau * (1 - tau) / n_eval)
            assert abs(cover - tau) < halfwidth + 0.01


class TestFitQr:
    def test_perfect_forecasts(self):
        x_hat = np.arange(12, dtype=float)
        fit = fit_qr(x_hat, x_hat, 0.5)
        obj = pinball(fit.beta0 + fit.beta1 * x_hat, x_hat, 0.5).sum()
        assert obj == pytest.approx(0.0, abs=1e-12)

    def test_constant_bias(self):
        x_hat = np.arange(12, dtype=float)
        fit = fit_qr(x_hat, x_hat + 5.0, 0.5)
        obj = pinball(fit.beta0 + fit.beta1 * x_hat, x_hat + 5.0, 0.5).sum()
        assert obj == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("tau", [0.1, 0.3, 0.5, 0.8])
    def test_matches_brute_force_on_generic_points(self, tau):
        rng = np.random.default_rng(int(tau * 100))
        for _ in range(25):
            x_hat = rng.standard_normal(6) * 3
            x = 2.0 * x_hat + rng.standard_normal(6)
            fit = fit_qr(x_hat, x, tau)
            ours = pinball(fit.beta0 + fit.beta1 * x_hat, x, tau).sum()
            _, _, oracle = brute_force_qr(x_hat, x, tau)
            assert ours == pytest.approx(oracle, abs=1e-9)

    def test_matches_linear_programming_solver(self):
        from scipy.optimize import linprog
        rng = np.random.default_rng(3)
        for tau in (0.2, 0.5, 0.85):
            x_hat = rng.standard_normal(40) * 5 + 10
            x = 1.5 * x_hat - 4 + rng.standard_normal(40) * 2
            n = len(x)
            # LP: min tau 1'u + (1-tau) 1'v  s.t.  b0 + b1 x_hat + u - v = x
            c = np.concatenate([np.zeros(2), tau * np.ones(n), (1 - tau) * np.ones(n)])
            A_eq = np.hstack([np.ones((n, 1)), x_hat[:, None], np.eye(n), -np.eye(n)])
            res = linprog(c, A_eq=A_eq, b_eq=x,
                          bounds=[(None, None)] * 2 + [(0, None)] * (2 * n),
                          method="highs")
            fit = fit_qr(x_hat, x, tau)
            ours = pinball(fit.beta0 + fit.beta1 * x_hat, x, tau).sum()
            assert ours == pytest.approx(res.fun, abs=1e-8)

    def test_subgradient_optimality_certificate(self):
        """Directional derivatives of the check objective at the fit are
        nonnegative along +-e0 and +-e1."""
        rng = np.random.default_rng(5)
        x_hat = rng.standard_normal(80)
        x = 0.7 * x_hat + 0.2 + rng.standard_normal(80) * 0.5
        for tau in (0.25, 0.5, 0.9):
            fit = fit_qr(x_hat, x, tau)
            f0 = pinball(fit.beta0 + fit.beta1 * x_hat, x, tau).sum()
            eps = 1e-7
            for db0, db1 in ((eps, 0), (-eps, 0), (0, eps), (0, -eps)):
                f1 = pinball(fit.beta0 + db0 + (fit.beta1 + db1) * x_hat, x, tau).sum()
                assert f1 - f0 >= -1e-9

    def test_degenerate_regressor_falls_back(self):
        x = np.arange(20, dtype=float)
        fit = fit_qr(np.full(20, 3.0), x, 0.5)
        assert fit.degenerate
        assert fit.beta1 == 0.0
        assert fit.beta0 == pytest.approx(empirical_quantile(x, 0.5))


class TestCheckLoss:
    @given(st.floats(-100, 100), st.floats(-100, 100), st.floats(0.01, 0.99))
    @settings(max_examples=100, deadline=None)
    def test_nonnegative_zero_iff_equal(self, q, x, tau):
        val = float(check_loss(q, x, tau))
        assert val >= 0.0
        if q != x:
            assert val > 0.0
        else:
            assert val == 0.0

    def test_piecewise_slopes(self):
        tau = 0.3
        x = 1.0
        # slope in q is (1 - tau) above x and -tau below
        up = (check_loss(3.0, x, tau) - check_loss(2.0, x, tau))
        down = (check_loss(-2.0, x, tau) - check_loss(-1.0, x, tau))
        assert up == pytest.approx(1 - tau)
        assert down == pytest.approx(tau)


class TestQrForecastAndRearrange:
    def test_identity_coefficients(self):
        grid = make_grid("T5", 60)
        co = np.column_stack([np.zeros(5), np.ones(5)])
        np.testing.assert_array_equal(qr_forecast(co, 42.0, grid), np.full(5, 42.0))

    def test_crossing_is_sorted(self):
        grid = make_grid("T5", 60)
        co = np.column_stack([np.array([5.0, 3.0, 7.0, 2.0, 9.0]), np.zeros(5)])
        np.testing.assert_array_equal(qr_forecast(co, 0.0, grid), [2, 3, 5, 7, 9])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
    @settings(max_examples=60, deadline=None)
    def test_rearrange_sorts_preserving_multiset(self, values):
        out = rearrange(values)
        assert (np.diff(out) >= 0).all()
        np.testing.assert_array_equal(np.sort(np.asarray(values, dtype=float)), out)

    def test_rearrange_idempotent(self):
        v = np.array([1.0, 2.0, 2.0, 5.0])
        np.testing.assert_array_equal(rearrange(rearrange(v)), rearrange(v))


class TestReluTransform:
    def test_point_forecast_dominates(self):
        grid = make_grid("T11", 60)
        window = np.linspace(0, 10, 60)
        out = relu_transform(50.0, window, grid)
        np.testing.assert_array_equal(out, np.full(grid.size, 50.0))

    def test_window_dominates(self):
        grid = make_grid("T11", 60)
        window = np.linspace(20, 30, 60)
        out = relu_transform(5.0, window, grid)
        ref = np.quantile(window, grid.levels)
        np.testing.assert_allclose(out, ref, rtol=1e-12)

    def test_elementwise_max(self):
        grid = make_grid("T5", 60)
        out = relu_transform(30.0, np.linspace(0, 45, 61), grid)
        assert (out >= 30.0).all()
        assert out[-1] > 30.0

    def test_empty_window_errors(self):
        with pytest.raises(PostprocError):
            relu_transform(1.0, [], make_grid("T5", 60))


class TestBuildSurface:
    N = 60

    def grid(self):
        return epfq.make_grid("T11", self.N)

    def test_monotone_in_tau(self, market):
        for method in ("HS", "QR", "ReLU"):
            surf = build_surface("ResLoad", market.forecasts["ResLoad"],
                                 market.actuals["ResLoad"], method, self.grid(),
                                 n_window=self.N)
            assert (np.diff(surf.values, axis=-1) >= -1e-9).all()

    def test_solar_zero_hours_untrained(self, market):
        surf = build_surface("Solar", market.forecasts["Solar"],
                             market.actuals["Solar"], "QR", self.grid(),
                             n_window=self.N)
        fc = market.forecasts["Solar"].values[surf.index(surf.first_day):]
        night = market.forecasts["Solar"].values[
            (surf.first_day - market.prices.first_day).days:][:surf.n_days] == 0.0
        assert night.any()
        assert surf.untrained[night].all()
        assert (surf.values[night] == 0.0).all()

    def test_nonnegative_variables_truncated(self, market):
        for var in ("Wind", "RES"):
            surf = build_surface(var, market.forecasts[var], market.actuals[var],
                                 "HS", self.grid(), n_window=self.N)
            assert (surf.values >= 0.0).all()

    def test_resload_keeps_negative_quantiles(self, market):
        surf = build_surface("ResLoad", market.forecasts["ResLoad"],
                             market.actuals["ResLoad"], "QR", self.grid(),
                             n_window=self.N)
        # synthetic market has solar+wind exceeding load on some hours
        assert (surf.values < 0.0).any()

    def test_hs_slice_matches_scalar_op(self, market):
        surf = build_surface("Load", market.forecasts["Load"], market.actuals["Load"],
                             "HS", self.grid(), n_window=self.N)
        day = surf.first_day + dt.timedelta(days=5)
        h = 10
        i = market.forecasts["Load"].index(day)
        errs = (market.actuals["Load"].values[i - self.N:i - 1, h - 1]
                - market.forecasts["Load"].values[i - self.N:i - 1, h - 1])
        ref = hs_forecast(market.forecasts["Load"].get(day, h), errs, self.grid())
        np.testing.assert_allclose(surf.quantiles(day, h), np.maximum(ref, 0.0), rtol=1e-12)

    def test_relu_dominates_point_forecast(self, market):
        surf = build_surface("Wind", market.forecasts["Wind"], market.actuals["Wind"],
                             "ReLU", self.grid(), n_window=self.N)
        i0 = market.forecasts["Wind"].index(surf.first_day)
        fc = market.forecasts["Wind"].values[i0:i0 + surf.n_days]
        assert (surf.values >= fc[:, :, None] - 1e-9).all()

    def test_no_lookahead(self, market):
        """Garbling actuals from d-1 on and forecasts after d leaves the
        surface for day d unchanged."""
        grid = self.grid()
        surf = build_surface("Load", market.forecasts["Load"], market.actuals["Load"],
                             "QR", grid, n_window=self.N)
        day = surf.first_day + dt.timedelta(days=3)
        i = market.actuals["Load"].index(day)
        act = market.actuals["Load"].values.copy()
        fc = market.forecasts["Load"].values.copy()
        rng = np.random.default_rng(0)
        act[i - 1:] = 1e5 * rng.random(act[i - 1:].shape)
        fc[i + 1:] = 1e5 * rng.random(fc[i + 1:].shape)
        from epfq.panel import HourlyPanel
        surf2 = build_surface("Load", HourlyPanel(market.prices.first_day, fc),
                              HourlyPanel(market.prices.first_day, act), "QR", grid,
                              n_window=self.N, first_day=day, last_day=day)
        np.testing.assert_allclose(surf2.values[0], surf.values[surf.index(day)],
                                   rtol=1e-9, atol=1e-9)

    def test_insufficient_history_errors(self, market):
        with pytest.raises(PostprocError, match="insufficient history"):
            build_surface("Load", market.forecasts["Load"], market.actuals["Load"],
                          "HS", self.grid(), n_window=self.N,
                          first_day=market.prices.first_day + dt.timedelta(days=10))

    def test_csv_round_trip(self, market, tmp_path):
        surf = build_surface("Wind", market.forecasts["Wind"], market.actuals["Wind"],
                             "HS", self.grid(), n_window=self.N,
                             last_day=market.prices.first_day + dt.timedelta(days=self.N + 3))
        path = tmp_path / "surf.csv"
        write_surface_csv(surf, path)
        back = read_surface_csv(path)
        assert back.variable == "Wind" and back.method == "HS"
        assert back.first_day == surf.first_day
        np.testing.assert_allclose(back.values, surf.values, rtol=1e-9)
