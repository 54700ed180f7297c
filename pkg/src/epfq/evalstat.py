"""Forecast evaluation statistics.

RMSE is computed day-wise (root of the hourly mean square) and aggregated as
the root of the mean squared daily RMSE, which coincides with the flat RMSE
over all hourly errors. Model pairs are compared with a conditional
predictive ability test: the loss differential is regressed on its own lag
plus a constant and the null of both coefficients being zero is tested with a
heteroskedasticity-robust Wald statistic against chi-squared with 2 degrees
of freedom.

Also here: selection frequency of quantile inputs across the fitted history,
group impact decompositions of the predictions, and the convexity gap between
the merit-order price of an expected residual load and the expected
merit-order price.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .models import split_quantile_column


class EvalError(ValueError):
    pass


def rmse_daily(errors) -> float:
    """Root mean square of one day's 24 hourly errors."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.shape != (24,) or not np.isfinite(e).all():
        raise EvalError("need 24 finite hourly errors")
    return float(np.sqrt(np.mean(e ** 2)))


def daily_rmse_series(errors: np.ndarray) -> np.ndarray:
    """Per-day RMSE for an [n_days x 24] error matrix."""
    e = np.asarray(errors, dtype=float)
    if e.ndim != 2 or e.shape[1] != 24 or not np.isfinite(e).all():
        raise EvalError("need a finite [n_days x 24] error matrix")
    return np.sqrt(np.mean(e ** 2, axis=1))


def rmse_aggregate(loss) -> float:
    """Root of the mean squared daily RMSE over the out-of-sample period.

    Algebraically identical to pooling all n_days * 24 errors into one RMSE.
    """
    loss = np.asarray(loss, dtype=float).ravel()
    if loss.size == 0 or not np.isfinite(loss).all() or (loss < 0).any():
        raise EvalError("daily RMSE series must be nonnegative and finite")
    return float(np.sqrt(np.mean(loss ** 2)))


def rmse_hourly_and_pctchng(errors_a: np.ndarray, errors_b: np.ndarray):
    """Per-hour RMSE of two models and the log percentage change of A vs B.

    %chng_h = 100 * ln(RMSE_h^A / RMSE_h^B); negative where A beats B. Hourly
    RMSE is normalized by the day count, which cancels in the ratio.
    """
    ea = np.asarray(errors_a, dtype=float)
    eb = np.asarray(errors_b, dtype=float)
    if ea.shape != eb.shape or ea.ndim != 2 or ea.shape[1] != 24:
        raise EvalError("need two aligned [n_days x 24] error matrices")
    ra = np.sqrt(np.mean(ea ** 2, axis=0))
    rb = np.sqrt(np.mean(eb ** 2, axis=0))
    if (ra == 0).any() or (rb == 0).any():
        raise EvalError("zero hourly RMSE, percentage change undefined")
    return 100.0 * np.log(ra / rb), ra, rb


@dataclass
class CpaResult:
    statistic: float
    p_value: float          # two-sided
    p_one_sided: float      # small when A outperforms B on average
    phi: np.ndarray         # (intercept, lag coefficient)
    n: int
    degenerate: bool = False


def cpa_test(loss_a, loss_b) -> CpaResult:
    """Conditional predictive ability test on two daily loss series.

    Regresses the loss differential on a constant and its first lag and tests
    whether both coefficients vanish. The one-sided p-value halves the
    two-sided one when the mean differential favours model A, mirroring
    heatmaps read as "A outperforms B".
    """
    a = np.asarray(loss_a, dtype=float).ravel()
    b = np.asarray(loss_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise EvalError("loss series do not align")
    n = a.size
    if n < 30:
        raise EvalError(f"need at least 30 days, got {n}")
    delta = a - b
    mean_neg = float(delta.mean()) < 0.0
    X = np.column_stack([np.ones(n - 1), delta[:-1]])
    t = delta[1:]
    m = n - 1
    XtX = X.T @ X
    if delta.std() == 0.0 or np.linalg.matrix_rank(XtX) < 2:
        return CpaResult(0.0, 1.0, 1.0, np.zeros(2), n, degenerate=True)
    phi = np.linalg.solve(XtX, X.T @ t)
    resid = t - X @ phi
    A = XtX / m
    S = (X * resid[:, None] ** 2).T @ X / m
    A_inv = np.linalg.inv(A)
    V = A_inv @ S @ A_inv
    stat = float(m * phi @ np.linalg.solve(V, phi))
    p = float(sps.chi2.sf(stat, df=2))
    p_one = 0.5 * p if mean_neg else 1.0 - 0.5 * p
    return CpaResult(stat, p, p_one, phi, n)


# ---------------------------------------------------------------------------
# Fitted-model history analyses.
# ---------------------------------------------------------------------------

def selection_frequency(records, variable: str) -> dict:
    """How often each quantile input of ``variable`` carries a nonzero
    coefficient, as a percentage of out-of-sample days per (tau, hour).

    Columns dropped for a given day count as not selected. Specs without
    quantile inputs yield an empty map.
    """
    prefix = f"{variable.lower()}_q"
    days_per_hour = {}
    counts = {}
    for rec in records:
        days_per_hour[rec.hour] = days_per_hour.get(rec.hour, 0) + 1
        for j, nm in enumerate(rec.fit.column_names):
            if nm.startswith(prefix) and rec.fit.coef_std[j] != 0.0:
                parsed = split_quantile_column(nm)
                key = (parsed[1], rec.hour)
                counts[key] = counts.get(key, 0) + 1
    taus = sorted({split_quantile_column(nm)[1]
                   for rec in records for nm in rec.fit.column_names
                   if nm.startswith(prefix)})
    out = {}
    for tau in taus:
        for hour, n_days in days_per_hour.items():
            out[(tau, hour)] = 100.0 * counts.get((tau, hour), 0) / n_days
    return out


_GROUP_PREFIXES = (
    ("price_", "autoregressive"),
    ("dummy_", "intercept"),
    ("coal_close", "commodities"), ("gas_close", "commodities"),
    ("oil_close", "commodities"), ("eua_close", "commodities"),
    ("load_hat", "load"), ("load_q", "load"),
    ("solar_hat", "res"), ("wind_hat", "res"),
    ("solar_q", "res"), ("wind_q", "res"), ("res_q", "res"),
    ("resload_q", "resload"),
)


def default_group(name: str) -> str:
    for prefix, group in _GROUP_PREFIXES:
        if name.startswith(prefix):
            return group
    return "other"


def quantile_tail_group(tau: float, tail_low: float = 0.1, tail_high: float = 0.9) -> str:
    if tau <= tail_low:
        return "lower"
    if tau >= tail_high:
        return "upper"
    return "middle"


def group_impact(records, grouping=None, tail_low: float = 0.1,
                 tail_high: float = 0.9) -> dict:
    """Average impact of variable groups on the forecast, per hour.

    The impact of a group at one (day, hour) is the sum of its columns'
    coefficient-times-standardized-regressor terms, i.e. the group's additive
    share of the prediction in target-standard-deviation units. The model
    intercept is zero on that scale, so the intercept group reduces to the
    weekday dummies. Both the signed mean over days and the mean absolute
    value are reported; quantile inputs additionally split into lower / middle
    / upper tail sub-groups per variable.

    ``grouping`` may map column names to custom group labels; names unknown to
    the history are an error.
    """
    if grouping:
        known = {nm for rec in records for nm in rec.fit.column_names}
        unknown = sorted(set(grouping) - known)
        if unknown:
            raise EvalError(f"grouping references unknown column(s) {unknown[:5]}")

    sums = {}
    abs_sums = {}
    n_days = {}
    for rec in records:
        h = rec.hour
        n_days[h] = n_days.get(h, 0) + 1
        per_group = {}
        for j, nm in enumerate(rec.fit.column_names):
            c = rec.contributions[j]
            if c == 0.0:
                continue
            if grouping and nm in grouping:
                g = grouping[nm]
            else:
                g = default_group(nm)
            per_group[g] = per_group.get(g, 0.0) + c
            parsed = split_quantile_column(nm)
            if parsed is not None:
                tg = f"{parsed[0]}:{quantile_tail_group(parsed[1], tail_low, tail_high)}"
                per_group[tg] = per_group.get(tg, 0.0) + c
        for g, val in per_group.items():
            sums.setdefault(g, np.zeros(24))[h - 1] += val
            abs_sums.setdefault(g, np.zeros(24))[h - 1] += abs(val)
    denom = np.array([n_days.get(h, 1) for h in range(1, 25)], dtype=float)
    return {
        "signed": {g: v / denom for g, v in sums.items()},
        "absolute": {g: v / denom for g, v in abs_sums.items()},
    }


# ---------------------------------------------------------------------------
# Supply-stack convexity gap.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeritCurve:
    """Piecewise-linear nondecreasing map residual load -> price."""

    knots_x: np.ndarray
    knots_y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.knots_x, dtype=float)
        y = np.asarray(self.knots_y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise EvalError("merit curve needs aligned knot arrays, >= 2 knots")
        if not (np.diff(x) > 0).all():
            raise EvalError("merit curve knots must be strictly increasing in x")
        if (np.diff(y) < 0).any():
            raise EvalError("merit curve must be nondecreasing")
        object.__setattr__(self, "knots_x", x)
        object.__setattr__(self, "knots_y", y)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if (x < self.knots_x[0]).any() or (x > self.knots_x[-1]).any():
            raise EvalError(
                f"residual load outside merit curve domain "
                f"[{self.knots_x[0]:g}, {self.knots_x[-1]:g}]")
        return np.interp(x, self.knots_x, self.knots_y)


def jensen_gap(curve: MeritCurve, points, probs) -> tuple[float, float]:
    """(MO(E[X]), E[MO(X)]) for a discrete residual-load distribution.

    For a convex curve the second is at least the first: plugging a point
    forecast into the supply stack understates the expected price.
    """
    x = np.asarray(points, dtype=float).ravel()
    p = np.asarray(probs, dtype=float).ravel()
    if x.shape != p.shape or x.size == 0:
        raise EvalError("points and probabilities do not align")
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise EvalError("probabilities must be nonnegative and sum to one")
    mo_of_mean = float(curve(np.array([x @ p]))[0])
    mean_of_mo = float(curve(x) @ p)
    return mo_of_mean, mean_of_mo


def demo_supply_stack():
    """Demonstration configuration: a convex supply stack and a residual-load
    density centred at 30 GW whose point-forecast price is 92 EUR/MWh while
    the expected price is around 122 EUR/MWh.

    Returns (curve, points, probs).
    """
    knots_x = np.array([0.0, 10.0, 20.0, 25.0, 28.0, 30.0, 32.0, 34.0,
                        36.0, 38.0, 40.0, 43.0, 46.0, 50.0])
    slopes = np.array([0.6, 1.2, 2.2, 3.4, 4.6, 7.5, 12.0, 19.0,
                       30.0, 46.0, 68.0, 95.0, 130.0])
    base = 92.0 - float(slopes[:5] @ np.diff(knots_x)[:5])
    knots_y = base + np.concatenate(([0.0], np.cumsum(slopes * np.diff(knots_x))))
    curve = MeritCurve(knots_x, knots_y)
    points = np.arange(30 - 14, 30 + 15, dtype=float)
    weights = np.exp(-0.5 * ((points - 30.0) / 6.0) ** 2)
    probs = weights / weights.sum()
    return curve, points, probs
