import datetime as dt

import numpy as np
import pytest

from epfq.evalstat import (EvalError, MeritCurve, cpa_test,
                           daily_rmse_series, demo_supply_stack, group_impact,
                           jensen_gap, rmse_aggregate, rmse_daily,
                           rmse_hourly_and_pctchng, selection_frequency)


class TestRmse:
    def test_zero_errors(self):
        assert rmse_daily(np.zeros(24)) == 0.0

    def test_constant_errors(self):
        assert rmse_daily(np.full(24, 2.0)) == 2.0

    def test_mixed_example(self):
        errors = np.zeros(24)
        errors[0], errors[1] = 3.0, -4.0
        assert rmse_daily(errors) == pytest.approx(1.0206207261596576)

    def test_wrong_length_errors(self):
        with pytest.raises(EvalError):
            rmse_daily(np.zeros(23))

    def test_aggregate_of_constant(self):
        assert rmse_aggregate(np.full(30, 3.3)) == pytest.approx(3.3)

    def test_aggregate_equals_pooled(self):
        rng = np.random.default_rng(0)
        errors = rng.standard_normal((50, 24)) * 5
        agg = rmse_aggregate(daily_rmse_series(errors))
        pooled = float(np.sqrt(np.mean(errors ** 2)))
        assert agg == pytest.approx(pooled, abs=1e-12)


class TestPctChng:
    def test_identical_errors_zero(self):
        rng = np.random.default_rng(1)
        e = rng.standard_normal((40, 24))
        pct, _, _ = rmse_hourly_and_pctchng(e, e)
        np.testing.assert_allclose(pct, 0.0, atol=1e-12)

    def test_log_definition(self):
        rng = np.random.default_rng(2)
        e = rng.standard_normal((40, 24))
        pct, _, _ = rmse_hourly_and_pctchng(e / np.e, e)
        np.testing.assert_allclose(pct, -100.0, rtol=1e-9)

    def test_sign_pattern(self):
        rng = np.random.default_rng(3)
        e = rng.standard_normal((40, 24))
        better = e.copy()
        better[:, :12] *= 0.5
        pct, _, _ = rmse_hourly_and_pctchng(better, e)
        assert (pct[:12] < 0).all()
        np.testing.assert_allclose(pct[12:], 0.0, atol=1e-12)

    def test_common_scale_invariance(self):
        rng = np.random.default_rng(4)
        ea = rng.standard_normal((40, 24))
        eb = rng.standard_normal((40, 24))
        pct1, _, _ = rmse_hourly_and_pctchng(ea, eb)
        pct2, _, _ = rmse_hourly_and_pctchng(ea * 7.3, eb * 7.3)
        np.testing.assert_allclose(pct1, pct2, rtol=1e-12)


class TestCpa:
    def test_identical_losses_degenerate(self):
        loss = np.full(100, 2.0)
        res = cpa_test(loss, loss)
        assert res.degenerate and res.p_value == 1.0

    def test_antisymmetric_phi0_symmetric_p(self):
        rng = np.random.default_rng(5)
        a = np.abs(rng.standard_normal(200)) + 1
        b = np.abs(rng.standard_normal(200)) + 1
        r1, r2 = cpa_test(a, b), cpa_test(b, a)
        assert r1.phi[0] == pytest.approx(-r2.phi[0], rel=1e-9)
        assert r1.p_value == pytest.approx(r2.p_value, rel=1e-9)

    def test_uniformly_better_model_rejects(self):
        rng = np.random.default_rng(6)
        a = np.abs(rng.standard_normal(500)) + 1.5
        b = np.abs(rng.standard_normal(500)) + 2.5
        res = cpa_test(a, b)
        assert res.p_value < 0.01
        assert res.p_one_sided < 0.005

    def test_one_sided_orientation(self):
        rng = np.random.default_rng(7)
        base = np.abs(rng.standard_normal(300)) + 2
        better = cpa_test(base - 0.3, base)
        worse = cpa_test(base + 0.3, base)
        assert better.p_one_sided < 0.5 < worse.p_one_sided

    def test_too_short_errors(self):
        with pytest.raises(EvalError):
            cpa_test(np.ones(10), np.zeros(10))

    def test_size_under_null_monte_carlo(self):
        """Exchangeable equal-accuracy losses: ~5% rejections at the 5% level."""
        rng = np.random.default_rng(8)
        n, reps = 300, 400
        rejections = 0
        for _ in range(reps):
            a = np.abs(rng.standard_normal(n))
            b = np.abs(rng.standard_normal(n))
            if cpa_test(a, b).p_value < 0.05:
                rejections += 1
        rate = rejections / reps
        assert 0.02 < rate < 0.09


def make_record(day, hour, names, coef_std, contributions):
    """Minimal stand-in for a FitRecord, duck-typed for evalstat."""
    class Fit:
        pass

    class Rec:
        pass

    fit = Fit()
    fit.column_names = names
    fit.coef_std = np.asarray(coef_std, dtype=float)
    rec = Rec()
    rec.day = day
    rec.hour = hour
    rec.fit = fit
    rec.contributions = np.asarray(contributions, dtype=float)
    return rec


class TestSelectionFrequency:
    names = ["price_lag1", "load_q0.1", "load_q0.9"]

    def records(self, pattern):
        """pattern[d][h] -> coef vector"""
        out = []
        for d, day_pat in enumerate(pattern):
            for h, coefs in day_pat.items():
                out.append(make_record(dt.date(2020, 1, 1) + dt.timedelta(days=d),
                                       h, self.names, coefs, coefs))
        return out

    def test_never_and_always(self):
        recs = self.records([{1: [1.0, 0.0, 2.0]}, {1: [0.5, 0.0, 1.0]}])
        freq = selection_frequency(recs, "Load")
        assert freq[(0.1, 1)] == 0.0
        assert freq[(0.9, 1)] == 100.0

    def test_half_selected(self):
        recs = self.records([{2: [0.0, 1.0, 0.0]}, {2: [0.0, 0.0, 0.0]}])
        freq = selection_frequency(recs, "Load")
        assert freq[(0.1, 2)] == 50.0

    def test_benchmark_empty(self):
        recs = [make_record(dt.date(2020, 1, 1), 1, ["price_lag1"], [1.0], [1.0])]
        assert selection_frequency(recs, "Load") == {}

    def test_invariant_to_record_order(self):
        recs = self.records([{1: [1.0, 1.0, 0.0]}, {1: [0.0, 0.0, 1.0]}])
        a = selection_frequency(recs, "Load")
        b = selection_frequency(list(reversed(recs)), "Load")
        assert a == b

    def test_values_in_range(self, market, market_surfaces):
        from epfq.models import parse_spec, rolling_backtest
        spec = parse_spec("Expert-QR^Load_T11")
        surfs = {"Load": market_surfaces[("Load", "QR")]}
        start = market.prices.last_day - dt.timedelta(days=1)
        res = rolling_backtest(market, surfs, spec, start, market.prices.last_day,
                               run_seed=0, window=100)
        freq = selection_frequency(res.records, "Load")
        assert len(freq) == 11 * 24
        vals = np.array(list(freq.values()))
        assert ((0 <= vals) & (vals <= 100)).all()


class TestGroupImpact:
    def test_all_zero_fit(self):
        recs = [make_record(dt.date(2020, 1, 1), h, ["price_lag1", "load_hat"],
                            [0.0, 0.0], [0.0, 0.0]) for h in range(1, 25)]
        impact = group_impact(recs)
        assert impact["signed"] == {}

    def test_groups_and_tails(self):
        names = ["price_lag1", "load_hat", "gas_close", "dummy_mon",
                 "load_q0.05", "load_q0.5", "load_q0.95"]
        contrib = [1.0, 2.0, 3.0, 4.0, 0.5, 0.25, 0.75]
        recs = [make_record(dt.date(2020, 1, 1), 1, names, contrib, contrib)]
        impact = group_impact(recs)
        s = impact["signed"]
        assert s["autoregressive"][0] == 1.0
        assert s["load"][0] == pytest.approx(2.0 + 0.5 + 0.25 + 0.75)
        assert s["commodities"][0] == 3.0
        assert s["intercept"][0] == 4.0
        assert s["load:lower"][0] == 0.5
        assert s["load:middle"][0] == 0.25
        assert s["load:upper"][0] == 0.75

    def test_signed_vs_absolute(self):
        names = ["price_lag1", "price_lag2"]
        recs = [make_record(dt.date(2020, 1, 1), 1, names, [1.0, -1.0], [3.0, -4.0])]
        impact = group_impact(recs)
        assert impact["signed"]["autoregressive"][0] == pytest.approx(-1.0)
        assert impact["absolute"]["autoregressive"][0] == pytest.approx(1.0)

    def test_unknown_grouping_column_errors(self):
        recs = [make_record(dt.date(2020, 1, 1), 1, ["price_lag1"], [1.0], [1.0])]
        with pytest.raises(EvalError, match="unknown column"):
            group_impact(recs, grouping={"nonexistent": "misc"})

    def test_tail_counts_21_159_21(self):
        from epfq.evalstat import quantile_tail_group
        from epfq.postproc import make_grid
        levels = make_grid("T201", 364).levels
        groups = [quantile_tail_group(t) for t in levels]
        assert groups.count("lower") == 21
        assert groups.count("middle") == 159
        assert groups.count("upper") == 21


class TestJensenGap:
    def test_linear_curve_no_gap(self):
        curve = MeritCurve(np.array([0.0, 100.0]), np.array([0.0, 200.0]))
        x = np.array([20.0, 30.0, 40.0])
        p = np.array([0.25, 0.5, 0.25])
        mo_mean, mean_mo = jensen_gap(curve, x, p)
        assert mo_mean == pytest.approx(mean_mo)

    def test_convex_curve_gap_nonnegative(self):
        curve = MeritCurve(np.array([0.0, 30.0, 60.0]), np.array([0.0, 30.0, 120.0]))
        x = np.array([20.0, 30.0, 40.0])
        p = np.array([0.3, 0.4, 0.3])
        mo_mean, mean_mo = jensen_gap(curve, x, p)
        assert mean_mo >= mo_mean

    def test_point_mass_equality(self):
        curve, _, _ = demo_supply_stack()
        mo_mean, mean_mo = jensen_gap(curve, np.array([30.0]), np.array([1.0]))
        assert mo_mean == pytest.approx(mean_mo)

    def test_demo_configuration(self):
        curve, points, probs = demo_supply_stack()
        mo_mean, mean_mo = jensen_gap(curve, points, probs)
        assert mo_mean == pytest.approx(92.0, abs=1e-9)
        assert 120.0 <= mean_mo <= 125.0
        assert mean_mo > mo_mean

    def test_monotonicity_enforced(self):
        with pytest.raises(EvalError):
            MeritCurve(np.array([0.0, 1.0, 2.0]), np.array([0.0, 2.0, 1.0]))

    def test_domain_enforced(self):
        curve = MeritCurve(np.array([0.0, 10.0]), np.array([0.0, 10.0]))
        with pytest.raises(EvalError, match="domain"):
            jensen_gap(curve, np.array([20.0]), np.array([1.0]))

    def test_probabilities_validated(self):
        curve = MeritCurve(np.array([0.0, 10.0]), np.array([0.0, 10.0]))
        with pytest.raises(EvalError):
            jensen_gap(curve, np.array([5.0]), np.array([0.5]))
