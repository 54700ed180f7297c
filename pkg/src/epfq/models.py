"""Price-model design matrices, per-hour model bank, rolling backtest.

Two base regressor sets are supported: a 20-variable parsimonious model
(price lags for the delivery hour, previous-day summary prices, fundamental
point forecasts, commodity closes, weekday dummies) and a 205-variable
cross-hour model whose regressors are shared by all 24 delivery hours.
Either base can be extended with quantile forecasts of fundamental variables
for the delivery hour, one column per (variable, probability level).

A model bank is 24 LASSO fits, one per delivery hour, trained on a rolling
calibration window that shifts by one day per forecast day.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field

import numpy as np

from .lasso import LassoFit, Standardizer, fit_lasso_cv, fit_standardized_cv
from .panel import HourlyPanel, MarketData, PanelError, weekday_dummies
from .postproc import GRID_SIZES

VARIABLE_SETS = {
    "Load": ("Load",),
    "Solar": ("Solar",),
    "Wind": ("Wind",),
    "RES": ("RES",),
    "ResLoad": ("ResLoad",),
    "Load+RES": ("Load", "RES"),
    "Load+Solar+Wind": ("Load", "Solar", "Wind"),
}

BASE_SIZES = {"Expert": 20, "HLM": 205}
COMMODITY_ORDER = ("Coal", "Gas", "Oil", "EUA")
SOLAR_ZERO_SHARE = 0.25    # strictly-more-than threshold for dropping solar columns

_DUMMY_NAMES = ["dummy_mon", "dummy_tue", "dummy_wed", "dummy_thu",
                "dummy_fri", "dummy_sat", "dummy_sun"]
_COMMODITY_NAMES = ["coal_close", "gas_close", "oil_close", "eua_close"]

_SPEC_RE = re.compile(r"^(Expert|HLM)(?:-(HS|QR|ReLU)\^(\{?[A-Za-z+, ]+\}?)_T(\d+))?$")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Addressable model variant: base structure, postprocessing method,
    fundamental variable set and probability grid (all three set, or none)."""

    base: str
    postproc: str = None
    varset: str = None
    grid_label: str = None

    def __post_init__(self):
        if self.base not in BASE_SIZES:
            raise ModelError(f"unknown base model '{self.base}'")
        opts = (self.postproc, self.varset, self.grid_label)
        if any(o is None for o in opts) != all(o is None for o in opts):
            raise ModelError("postproc, varset and grid must be all set or all absent")
        if self.postproc is not None:
            if self.postproc not in ("HS", "QR", "ReLU"):
                raise ModelError(f"unknown postprocessing '{self.postproc}'")
            if self.varset not in VARIABLE_SETS:
                raise ModelError(f"unknown variable set '{self.varset}', "
                                 f"valid: {list(VARIABLE_SETS)}")
            if self.grid_label not in GRID_SIZES:
                raise ModelError(f"unknown grid '{self.grid_label}'")

    @property
    def is_benchmark(self) -> bool:
        return self.postproc is None

    @property
    def variables(self) -> tuple:
        return () if self.is_benchmark else VARIABLE_SETS[self.varset]

    @property
    def n_columns(self) -> int:
        extra = 0 if self.is_benchmark else len(self.variables) * GRID_SIZES[self.grid_label]
        return BASE_SIZES[self.base] + extra

    @property
    def label(self) -> str:
        if self.is_benchmark:
            return self.base
        return f"{self.base}-{self.postproc}^{self.varset}_{self.grid_label}"

    def __str__(self) -> str:
        return self.label


def parse_spec(text: str) -> ModelSpec:
    """Parse an addressing string like ``HLM-QR^ResLoad_T201`` or ``Expert``.

    Multi-variable sets accept either the canonical plus form
    (``Load+RES``) or a braced comma list (``{Load, RES}``).
    """
    m = _SPEC_RE.match(text.strip())
    if not m:
        raise ModelError(
            f"cannot parse model spec '{text}'; expected Base or Base-Post^Set_Tn with "
            f"Base in {list(BASE_SIZES)}, Post in ('HS', 'QR', 'ReLU'), "
            f"Set in {list(VARIABLE_SETS)}, Tn in {sorted(GRID_SIZES)}")
    base, post, varset, tn = m.groups()
    if post is None:
        return ModelSpec(base)
    varset = varset.strip("{}").replace(" ", "")
    varset = "+".join(varset.split(",")) if "," in varset else varset
    return ModelSpec(base, post, varset, f"T{tn}")


@dataclass
class FeatureRow:
    """Named regressor values for one (day, hour)."""

    names: list
    values: np.ndarray

    def __post_init__(self):
        if len(self.names) != len(set(self.names)):
            raise ModelError("duplicate column names in feature row")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.names),):
            raise ModelError("names and values do not align")


def _check_lags(data: MarketData, day: dt.date) -> None:
    need = day - dt.timedelta(days=7)
    if need < data.prices.first_day:
        raise PanelError(
            f"building regressors for {day} needs prices back to {need}, "
            f"panel starts {data.prices.first_day}")


def expert_row(data: MarketData, day: dt.date, hour: int) -> FeatureRow:
    """The 20 parsimonious regressors for one delivery hour."""
    _check_lags(data, day)
    p = data.prices
    prev = p.row(day - dt.timedelta(days=1))
    vals = [
        prev[hour - 1],
        p.get(day - dt.timedelta(days=2), hour),
        p.get(day - dt.timedelta(days=7), hour),
        prev[23],
        prev.min(),
        prev.max(),
        data.forecasts["Load"].get(day, hour),
        data.forecasts["Solar"].get(day, hour),
        data.forecasts["Wind"].get(day, hour),
    ]
    vals += [data.commodities[c].lookup(day) for c in COMMODITY_ORDER]
    vals += list(weekday_dummies(day))
    names = ["price_lag1", "price_lag2", "price_lag7", "price_last_hour",
             "price_min_prev", "price_max_prev", "load_hat", "solar_hat",
             "wind_hat"] + _COMMODITY_NAMES + _DUMMY_NAMES
    return FeatureRow(names, np.array(vals))


def hlm_row(data: MarketData, day: dt.date, hour: int) -> FeatureRow:
    """The 205 cross-hour regressors; identical for every delivery hour."""
    _check_lags(data, day)
    p = data.prices
    prev = p.row(day - dt.timedelta(days=1))
    blocks = [
        ("price_lag1", prev),
        ("price_lag7", p.row(day - dt.timedelta(days=7))),
    ]
    names = [f"{tag}_h{h:02d}" for tag, _ in blocks for h in range(1, 25)]
    vals = list(np.concatenate([b for _, b in blocks]))
    names += ["price_min_prev", "price_max_prev"]
    vals += [prev.min(), prev.max()]
    for var, tag in (("Load", "load_hat"), ("Solar", "solar_hat"), ("Wind", "wind_hat")):
        fc = data.forecasts[var]
        names += [f"{tag}_d_h{h:02d}" for h in range(1, 25)]
        vals += list(fc.row(day))
        names += [f"{tag}_d1_h{h:02d}" for h in range(1, 25)]
        vals += list(fc.row(day - dt.timedelta(days=1)))
    names += _COMMODITY_NAMES
    vals += [data.commodities[c].lookup(day) for c in COMMODITY_ORDER]
    names += _DUMMY_NAMES
    vals += list(weekday_dummies(day))
    return FeatureRow(names, np.array(vals))


def quantile_column_name(variable: str, tau: float) -> str:
    return f"{variable.lower()}_q{tau:.10g}"


def split_quantile_column(name: str):
    """(variable, tau) for a quantile column name, else None."""
    if "_q" not in name:
        return None
    var, _, suffix = name.rpartition("_q")
    try:
        return var, float(suffix)
    except ValueError:
        return None


def extend_row(base: FeatureRow, surfaces: dict, spec: ModelSpec,
               day: dt.date, hour: int) -> FeatureRow:
    """Append quantile forecasts of each spec variable for the delivery hour."""
    if spec.is_benchmark:
        return base
    names = list(base.names)
    vals = list(base.values)
    for var in spec.variables:
        surf = surfaces.get(var)
        if surf is None:
            raise ModelError(f"no quantile surface for variable '{var}'")
        if surf.method != spec.postproc or surf.grid.label != spec.grid_label:
            raise ModelError(
                f"surface for '{var}' is {surf.method}/{surf.grid.label}, "
                f"spec needs {spec.postproc}/{spec.grid_label}")
        q = surf.quantiles(day, hour)
        names += [quantile_column_name(var, t) for t in surf.grid.levels]
        vals += list(q)
    return FeatureRow(names, np.array(vals))


def build_row(data, surfaces, spec: ModelSpec, day, hour) -> FeatureRow:
    base = expert_row(data, day, hour) if spec.base == "Expert" else hlm_row(data, day, hour)
    return extend_row(base, surfaces, spec, day, hour)


@dataclass
class DesignMatrix:
    """Calibration design for one delivery hour: named columns plus target."""

    names: list
    X: np.ndarray
    y: np.ndarray
    hour: int
    dropped: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.shape != (len(self.y), len(self.names)):
            raise ModelError("design matrix shapes do not align")


def solar_exclusion_columns(X: np.ndarray, names: list, hour: int) -> dict:
    """Columns to drop under the 25 percent zero-share rule.

    Solar point-forecast columns whose calibration-window share of exact zeros
    strictly exceeds 25 percent are dropped. Solar quantile columns inherit
    the decision taken for the same-day solar forecast of the delivery hour.
    """
    drop = {}
    sameday = {"solar_hat", f"solar_hat_d_h{hour:02d}"}
    sameday_dropped = False
    for j, nm in enumerate(names):
        if nm.startswith("solar_hat"):
            share = float(np.mean(X[:, j] == 0.0))
            if share > SOLAR_ZERO_SHARE:
                drop[j] = f"solar zero share {share:.0%} > 25%"
                if nm in sameday:
                    sameday_dropped = True
    if sameday_dropped:
        for j, nm in enumerate(names):
            if nm.startswith("solar_q"):
                drop[j] = "inherited from same-day solar forecast exclusion"
    return drop


def apply_solar_exclusion(matrix: DesignMatrix) -> DesignMatrix:
    drop = solar_exclusion_columns(matrix.X, matrix.names, matrix.hour)
    if not drop:
        return matrix
    keep = [j for j in range(len(matrix.names)) if j not in drop]
    dropped = dict(matrix.dropped)
    dropped.update({matrix.names[j]: why for j, why in drop.items()})
    return DesignMatrix([matrix.names[j] for j in keep], matrix.X[:, keep],
                        matrix.y, matrix.hour, dropped)


@dataclass
class Design:
    """Prebuilt regressor tensor [n_days x 24 x p] over a contiguous day range."""

    spec: ModelSpec
    names: list
    first_day: dt.date
    tensor: np.ndarray
    target: np.ndarray   # aligned prices [n_days x 24]

    def __post_init__(self):
        self.solar_point_idx = np.array(
            [j for j, nm in enumerate(self.names) if nm.startswith("solar_hat")],
            dtype=np.int64)
        self.solar_q_idx = np.array(
            [j for j, nm in enumerate(self.names) if nm.startswith("solar_q")],
            dtype=np.int64)
        sameday = {"solar_hat"} | {f"solar_hat_d_h{h:02d}" for h in range(1, 25)}
        self.sameday_solar_idx = {self.names[j]: j for j in self.solar_point_idx
                                  if self.names[j] in sameday}

    def index(self, day: dt.date) -> int:
        i = (day - self.first_day).days
        if not 0 <= i < self.tensor.shape[0]:
            raise ModelError(f"day {day} outside design range")
        return i

    def solar_drops(self, ti: int, window: int) -> list:
        """Per-hour dropped column indices for the window ending at ti - 1."""
        if self.solar_point_idx.size == 0:
            return [np.empty(0, dtype=np.int64)] * 24
        block = self.tensor[ti - window:ti][:, :, self.solar_point_idx]
        shares = (block == 0.0).mean(axis=0)          # (24, n_solar)
        out = []
        for h in range(1, 25):
            over = shares[h - 1] > SOLAR_ZERO_SHARE
            drop = list(self.solar_point_idx[over])
            key = "solar_hat" if "solar_hat" in self.sameday_solar_idx \
                else f"solar_hat_d_h{h:02d}"
            j_same = self.sameday_solar_idx.get(key)
            if j_same is not None and j_same in drop:
                drop.extend(self.solar_q_idx)
            out.append(np.array(sorted(drop), dtype=np.int64))
        return out


def build_design(data: MarketData, surfaces: dict, spec: ModelSpec,
                 first_day: dt.date, last_day: dt.date) -> Design:
    """Vectorized regressor tensor for every day in [first_day, last_day]."""
    n = (last_day - first_day).days + 1
    if n < 1:
        raise ModelError(f"empty design range [{first_day}, {last_day}]")
    _check_lags(data, first_day)
    p = data.prices
    i0 = p.index(first_day)
    p.index(last_day)
    P = p.values
    days = [first_day + dt.timedelta(days=i) for i in range(n)]

    cols = {}
    prev = P[i0 - 1:i0 - 1 + n]                       # prices of d-1
    if spec.base == "Expert":
        cols["price_lag1"] = prev                      # [n x 24], per-hour
        cols["price_lag2"] = P[i0 - 2:i0 - 2 + n]
        cols["price_lag7"] = P[i0 - 7:i0 - 7 + n]
        cols["price_last_hour"] = prev[:, 23]
        cols["price_min_prev"] = prev.min(axis=1)
        cols["price_max_prev"] = prev.max(axis=1)
        for var, tag in (("Load", "load_hat"), ("Solar", "solar_hat"), ("Wind", "wind_hat")):
            fc = data.forecasts[var]
            j0 = fc.index(first_day)
            fc.index(last_day)
            cols[tag] = fc.values[j0:j0 + n]
    else:
        lag7 = P[i0 - 7:i0 - 7 + n]
        for h in range(24):
            cols[f"price_lag1_h{h + 1:02d}"] = prev[:, h]
        for h in range(24):
            cols[f"price_lag7_h{h + 1:02d}"] = lag7[:, h]
        cols["price_min_prev"] = prev.min(axis=1)
        cols["price_max_prev"] = prev.max(axis=1)
        for var, tag in (("Load", "load_hat"), ("Solar", "solar_hat"), ("Wind", "wind_hat")):
            fc = data.forecasts[var]
            j0 = fc.index(first_day)
            fc.index(last_day)
            same = fc.values[j0:j0 + n]
            lag1 = fc.values[j0 - 1:j0 - 1 + n]
            for h in range(24):
                cols[f"{tag}_d_h{h + 1:02d}"] = same[:, h]
            for h in range(24):
                cols[f"{tag}_d1_h{h + 1:02d}"] = lag1[:, h]
    for cname, com in zip(_COMMODITY_NAMES, COMMODITY_ORDER):
        cols[cname] = data.commodities[com].lookup_many(days)
    wd = np.array([weekday_dummies(d) for d in days])
    for j, dname in enumerate(_DUMMY_NAMES):
        cols[dname] = wd[:, j]

    qcols = {}
    for var in spec.variables:
        surf = surfaces.get(var)
        if surf is None:
            raise ModelError(f"no quantile surface for variable '{var}'")
        if surf.method != spec.postproc or surf.grid.label != spec.grid_label:
            raise ModelError(
                f"surface for '{var}' is {surf.method}/{surf.grid.label}, "
                f"spec needs {spec.postproc}/{spec.grid_label}")
        s0 = surf.index(first_day)
        surf.index(last_day)
        block = surf.values[s0:s0 + n]                # [n x 24 x ntau]
        for t, tau in enumerate(surf.grid.levels):
            qcols[quantile_column_name(var, tau)] = block[:, :, t]

    names = list(cols) + list(qcols)
    assert len(names) == spec.n_columns
    tensor = np.empty((n, 24, len(names)))
    for j, nm in enumerate(names):
        arr = cols.get(nm)
        if arr is None:
            arr = qcols[nm]
        tensor[:, :, j] = arr if arr.ndim == 2 else arr[:, None]
    target = P[i0:i0 + n]
    return Design(spec, names, first_day, tensor, target)


@dataclass
class FitRecord:
    """One fitted (day, hour) model plus what it saw at prediction time."""

    day: dt.date
    hour: int
    fit: LassoFit
    x_row: np.ndarray          # original-unit prediction row, fit column order
    contributions: np.ndarray  # coef_std * standardized row, target-sd units
    prediction: float
    actual: float


def _fit_one_hour(design: Design, ti: int, day: dt.date, hour: int, window: int,
                  run_seed: int, k: int, fold_tol: float, fold_cap: int) -> FitRecord:
    X = design.tensor[ti - window:ti, hour - 1, :]
    y = design.target[ti - window:ti, hour - 1]
    drop = solar_exclusion_columns(X, design.names, hour)
    if drop:
        keep = np.array([j for j in range(len(design.names)) if j not in drop])
        names = [design.names[j] for j in keep]
        X = X[:, keep]
        dropped = {design.names[j]: why for j, why in drop.items()}
    else:
        keep = slice(None)
        names = design.names
        dropped = {}
    seed = np.random.SeedSequence([run_seed, day.toordinal(), hour])
    fit = fit_lasso_cv(X, y, names, seed=seed, k=k,
                       fold_tol=fold_tol, fold_cap=fold_cap, dropped=dropped)
    x_row = design.tensor[ti, hour - 1, keep]
    x_std = np.zeros(len(names))
    x_std[fit.standardizer.kept] = fit.standardizer.transform(x_row[None, :])[0]
    contrib = fit.coef_std * x_std
    pred = fit.predict_row(x_row)
    actual = float(design.target[ti, hour - 1])
    return FitRecord(day, hour, fit, x_row, contrib, pred, actual)


class _RollingGram:
    """Per-hour raw cross-product state for a one-day-at-a-time window roll.

    Shifting the calibration window drops one row and adds one per hour, a
    rank-two update of each hour's Gram. A fresh full recompute every 64
    steps keeps accumulated rounding far below the solver tolerances.
    """

    REANCHOR = 64

    def __init__(self, design: Design, ti: int, window: int):
        self.design = design
        self.window = window
        self.ti = ti
        self._recompute()

    def _recompute(self):
        X = self.design.tensor[self.ti - self.window:self.ti]      # (W, 24, p)
        y = self.design.target[self.ti - self.window:self.ti]      # (W, 24)
        Xh = np.ascontiguousarray(X.transpose(1, 0, 2))            # (24, W, p)
        self.G = np.matmul(Xh.transpose(0, 2, 1), Xh)              # (24, p, p)
        self.cxy = np.einsum("hwp,wh->hp", Xh, y)
        self.s1 = Xh.sum(axis=1)                                   # (24, p)
        self.sy = y.sum(axis=0)                                    # (24,)
        self.syy = (y * y).sum(axis=0)
        self._steps = 0

    def advance(self, ti_new: int):
        if ti_new == self.ti:
            return
        if ti_new != self.ti + 1 or self._steps >= self.REANCHOR:
            self.ti = ti_new
            self._recompute()
            return
        t = self.design.tensor
        tgt = self.design.target
        x_out = t[self.ti - self.window]     # (24, p)
        x_in = t[ti_new - 1]
        y_out = tgt[self.ti - self.window]   # (24,)
        y_in = tgt[ti_new - 1]
        self.G += x_in[:, :, None] * x_in[:, None, :] - x_out[:, :, None] * x_out[:, None, :]
        self.cxy += x_in * y_in[:, None] - x_out * y_out[:, None]
        self.s1 += x_in - x_out
        self.sy += y_in - y_out
        self.syy += y_in * y_in - y_out * y_out
        self.ti = ti_new
        self._steps += 1

    def standardized(self, hour: int, keep=None):
        """(standardizer, Xs'Xs, Xs'ys) for one hour, optionally on a column
        subset, derived from the rolled raw moments."""
        h = hour - 1
        W = float(self.window)
        if keep is None:
            G = self.G[h]
            cxy = self.cxy[h]
            s1 = self.s1[h]
        else:
            G = self.G[h][np.ix_(keep, keep)]
            cxy = self.cxy[h][keep]
            s1 = self.s1[h][keep]
        mean = s1 / W
        msq = np.diagonal(G) / W
        var = msq - mean * mean
        # rolled moments cancel catastrophically on (near-)constant columns;
        # anything below this relative floor is treated as zero variance
        kept = var > np.maximum(1e-18, 1e-13 * np.maximum(msq, 1.0))
        sd = np.where(kept, np.sqrt(np.maximum(var, 0.0)), 1.0)
        y_mean = self.sy[h] / W
        var_y = self.syy[h] / W - y_mean * y_mean
        y_sd = float(np.sqrt(max(var_y, 0.0)))
        std = Standardizer(mean, sd, kept, float(y_mean), y_sd)
        mk = mean[kept]
        sk = sd[kept]
        Gk = G[np.ix_(kept, kept)]
        y_scale = std.y_scale
        G_std = (Gk - W * np.outer(mk, mk)) / np.outer(sk, sk)
        c_std = (cxy[kept] - mk * self.sy[h]) / (sk * y_scale)
        return std, np.ascontiguousarray(G_std), c_std


def fit_hour_models(data: MarketData, surfaces: dict, spec: ModelSpec,
                    day: dt.date, run_seed: int = 0, window: int = 728,
                    k: int = 7, fold_tol: float = 3e-4, fold_cap: int = 3,
                    design: Design = None) -> list:
    """Fit the bank of 24 hourly models for one forecast day.

    The calibration window is the ``window`` days [day - window, day - 1];
    each hour assembles its rows, applies the solar exclusion, standardizes,
    cross-validates the penalty and fits. Deterministic given the run seed.
    """
    if design is None:
        design = build_design(data, surfaces, spec,
                              day - dt.timedelta(days=window), day)
    ti = design.index(day)
    if ti < window:
        raise ModelError(
            f"calibration window of {window} days before {day} not covered by design")
    return [_fit_one_hour(design, ti, day, h, window, run_seed, k, fold_tol, fold_cap)
            for h in range(1, 25)]


@dataclass
class BacktestResult:
    spec: ModelSpec
    forecasts: HourlyPanel
    actuals: HourlyPanel
    records: list

    @property
    def errors(self) -> np.ndarray:
        """actual - forecast, [n_days x 24]."""
        return self.actuals.values - self.forecasts.values


def first_feasible_day(data: MarketData, surface_first_day: dt.date,
                       window: int = 728) -> dt.date:
    """Earliest forecast day with a full price window and surface coverage."""
    by_prices = data.prices.first_day + dt.timedelta(days=window + 7)
    by_surfaces = surface_first_day + dt.timedelta(days=window)
    return max(by_prices, by_surfaces)


def _fit_one_hour_rolled(design: Design, rolled: _RollingGram, drops: np.ndarray,
                         ti: int, day: dt.date, hour: int, window: int,
                         run_seed: int, k: int, fold_tol: float,
                         fold_cap: int) -> FitRecord:
    if drops.size:
        keep = np.setdiff1d(np.arange(len(design.names)), drops)
        names = [design.names[j] for j in keep]
        q_idx = set(design.solar_q_idx)
        dropped = {design.names[j]: ("inherited from same-day solar forecast exclusion"
                                     if j in q_idx else "solar zero share > 25%")
                   for j in drops}
    else:
        keep = None
        names = design.names
        dropped = {}
    std, G_raw, c_raw = rolled.standardized(hour, keep)
    sel = slice(None) if keep is None else keep
    X = design.tensor[ti - window:ti, hour - 1, sel]
    y = design.target[ti - window:ti, hour - 1]
    Xs = std.transform(X)
    ys = std.transform_y(y)
    seed = np.random.SeedSequence([run_seed, day.toordinal(), hour])
    fit = fit_standardized_cv(Xs, ys, std, names, seed=seed, k=k,
                              fold_tol=fold_tol, fold_cap=fold_cap,
                              dropped=dropped, G_raw=G_raw, c_raw=c_raw)
    x_row = design.tensor[ti, hour - 1, sel]
    x_std = np.zeros(len(names))
    x_std[std.kept] = std.transform(x_row[None, :])[0]
    contrib = fit.coef_std * x_std
    pred = fit.predict_row(x_row)
    actual = float(design.target[ti, hour - 1])
    return FitRecord(day, hour, fit, x_row, contrib, pred, actual)


def rolling_backtest(data: MarketData, surfaces: dict, spec: ModelSpec,
                     oos_start: dt.date, oos_end: dt.date, run_seed: int = 0,
                     window: int = 728, k: int = 7, fold_tol: float = 3e-4,
                     fold_cap: int = 3, keep_records: bool = True,
                     on_day=None) -> BacktestResult:
    """Forecast every day of the out-of-sample range with a refitted bank.

    The calibration window shifts by one day per forecast day; the per-hour
    cross-products roll along with it. ``on_day`` is called after each
    completed day with (day, forecasts_24, actuals_24) so callers can persist
    whole-day results incrementally.
    """
    if oos_end < oos_start:
        raise ModelError(f"out-of-sample range [{oos_start}, {oos_end}] is empty")
    design = build_design(data, surfaces, spec,
                          oos_start - dt.timedelta(days=window), oos_end)
    n_out = (oos_end - oos_start).days + 1
    fc = np.empty((n_out, 24))
    records = []
    rolled = _RollingGram(design, design.index(oos_start), window)
    for di in range(n_out):
        day = oos_start + dt.timedelta(days=di)
        ti = design.index(day)
        rolled.advance(ti)
        day_drops = design.solar_drops(ti, window)
        day_records = [_fit_one_hour_rolled(design, rolled, day_drops[h - 1], ti,
                                            day, h, window, run_seed, k,
                                            fold_tol, fold_cap)
                       for h in range(1, 25)]
        fc[di] = [r.prediction for r in day_records]
        if keep_records:
            records.extend(day_records)
        if on_day is not None:
            on_day(day, fc[di], design.target[ti])
    i0 = data.prices.index(oos_start)
    actual = HourlyPanel(oos_start, data.prices.values[i0:i0 + n_out], "price")
    return BacktestResult(spec, HourlyPanel(oos_start, fc, f"forecast:{spec.label}"),
                          actual, records)
