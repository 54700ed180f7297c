"""L1-penalised least squares, built from scratch.

The objective is (1/2n) ||y - X b||^2 + lambda ||b||_1 on standardized data
with an unpenalised intercept. Solved by cyclic coordinate descent with
soft-thresholding on the Gram matrix; the tuning parameter comes from k-fold
cross-validation over a descending log-spaced grid with warm starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels

N_LAMBDA = 100
LAMBDA_MIN_RATIO = 1e-4
CD_TOL = 1e-7
CD_MAX_SWEEPS = 100_000


class LassoError(ValueError):
    pass


@dataclass
class Standardizer:
    """Column means/sds of the design plus the target's location and scale.

    Zero-variance columns are flagged in ``kept`` and excluded from the
    penalised fit; their coefficients are reported as zero.
    """

    mean: np.ndarray
    sd: np.ndarray
    kept: np.ndarray
    y_mean: float
    y_sd: float

    @property
    def y_scale(self) -> float:
        return self.y_sd if self.y_sd > 0.0 else 1.0

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X[:, self.kept] - self.mean[self.kept]) / self.sd[self.kept]

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_scale


def standardize(X, y) -> tuple[np.ndarray, np.ndarray, Standardizer]:
    """Center and scale columns of X and the target y.

    Returns (X', y', standardizer) where every retained column of X' has mean
    zero and unit standard deviation. Constant columns are dropped (recorded
    in the standardizer), never an error.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise LassoError(f"X {X.shape} and y {y.shape} do not align")
    if X.shape[0] < 2:
        raise LassoError("need at least two rows to standardize")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise LassoError("non-finite values in inputs")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    kept = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
    sd_safe = np.where(kept, sd, 1.0)
    std = Standardizer(mean, sd_safe, kept, float(y.mean()), float(y.std()))
    Xs = (X[:, kept] - mean[kept]) / sd_safe[kept]
    return Xs, std.transform_y(y), std


def lambda_grid(Xs: np.ndarray, ys: np.ndarray, count: int = N_LAMBDA) -> np.ndarray:
    """Descending log-spaced grid from lambda_max down to lambda_max * 1e-4.

    lambda_max = max_j |X'_j . y'| / n is the smallest penalty with an
    all-zero solution. Degenerate inputs (no columns, or y' orthogonal to
    every column) yield the single-point grid {0}.
    """
    n = ys.shape[0]
    if Xs.shape[1] == 0:
        return np.array([0.0])
    lam_max = float(np.max(np.abs(Xs.T @ ys)) / n)
    if lam_max <= 0.0:
        return np.array([0.0])
    return np.geomspace(lam_max, lam_max * LAMBDA_MIN_RATIO, count)


def fit_coordinate_descent(Xs, ys, lam: float, warm_start=None,
                           tol: float = CD_TOL, max_sweeps: int = CD_MAX_SWEEPS) -> np.ndarray:
    """Solve one LASSO problem on standardized data at a single lambda.

    Cyclic coordinate descent with soft-thresholding; converged when no
    coefficient moves by more than ``tol`` within a sweep. Deterministic given
    inputs.
    """
    Xs = np.ascontiguousarray(Xs, dtype=float)
    ys = np.asarray(ys, dtype=float).ravel()
    if not (np.isfinite(Xs).all() and np.isfinite(ys).all() and np.isfinite(lam)):
        raise LassoError("non-finite values in inputs")
    if lam < 0:
        raise LassoError(f"negative penalty {lam}")
    n, p = Xs.shape
    if p == 0:
        return np.zeros(0)
    G = np.ascontiguousarray(Xs.T @ Xs / n)
    c = Xs.T @ ys / n
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    grad = c - G @ beta
    active = np.zeros(p, dtype=bool)
    _kernels.cd_solve(G, c, float(lam), beta, grad, active, tol, max_sweeps)
    return beta


def objective(Xs, ys, beta, lam: float) -> float:
    """(1/2n) ||y' - X' b||^2 + lambda ||b||_1."""
    r = ys - Xs @ beta
    return float(r @ r / (2 * len(ys)) + lam * np.abs(beta).sum())


def kkt_violation(Xs, ys, beta, lam: float) -> float:
    """Worst violation of the stationarity conditions at ``beta``.

    For beta_j = 0 the correlation |X'_j r| / n may not exceed lambda; for
    beta_j != 0 it must equal lambda * sign(beta_j).
    """
    n = Xs.shape[0]
    g = Xs.T @ (ys - Xs @ beta) / n
    zero = beta == 0.0
    v_zero = np.maximum(np.abs(g[zero]) - lam, 0.0)
    v_nonzero = np.abs(g[~zero] - lam * np.sign(beta[~zero]))
    worst = 0.0
    if v_zero.size:
        worst = max(worst, float(v_zero.max()))
    if v_nonzero.size:
        worst = max(worst, float(v_nonzero.max()))
    return worst


def fold_assignment(n: int, k: int, seed) -> np.ndarray:
    """Uniformly random fold ids (0..k-1) for n rows, deterministic per seed."""
    if not 2 <= k <= n:
        raise LassoError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    ids = np.empty(n, dtype=np.int64)
    ids[perm] = np.arange(n, dtype=np.int64) % k
    return ids


def _cv_kernel_inputs(Xs, ys, fold_ids, k, G_raw=None, c_raw=None):
    n, p = Xs.shape
    if G_raw is None:
        G_raw = Xs.T @ Xs
        c_raw = Xs.T @ ys
    nval = np.bincount(fold_ids, minlength=k).astype(np.int64)
    nv_max = int(nval.max())
    Xval = np.zeros((k, nv_max, p))
    yval = np.zeros((k, nv_max))
    for f in range(k):
        m = fold_ids == f
        Xval[f, :nval[f]] = Xs[m]
        yval[f, :nval[f]] = ys[m]
    XvalT = np.ascontiguousarray(Xval.transpose(0, 2, 1))
    # zero padding keeps the batched products exact; fold problems stay on
    # the raw cross-product scale (the kernel scales the penalty instead)
    G_folds = G_raw[None, :, :] - np.matmul(XvalT, Xval)
    c_folds = c_raw[None, :] - np.matmul(XvalT, yval[:, :, None])[:, :, 0]
    return (np.ascontiguousarray(G_folds), c_folds, XvalT, yval, nval,
            np.ascontiguousarray(G_raw / n), c_raw / n)


def cv_select(Xs, ys, grid, k: int = 7, seed=0, fold_tol: float = 1e-5,
              fold_cap: int = 1000) -> tuple[float, np.ndarray]:
    """Pick the best lambda from a descending grid by k-fold cross-validation.

    Rows are partitioned uniformly at random with the given seed; each fold
    fits the whole grid with warm starts and contributes its validation MSE.
    Ties at the minimum resolve toward the larger lambda.
    """
    Xs = np.ascontiguousarray(Xs, dtype=float)
    ys = np.asarray(ys, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float)
    fold_ids = fold_assignment(len(ys), k, seed)
    if Xs.shape[1] == 0:
        curve = np.full(grid.shape, np.mean(ys ** 2))
        return float(grid[0]), curve
    G_folds, c_folds, Xval, yval, nval, G_full, c_full = _cv_kernel_inputs(Xs, ys, fold_ids, k)
    curve, best, _ = _kernels.cv_curve_and_fit(
        G_folds, c_folds, Xval, yval, nval, G_full, c_full,
        grid, fold_tol, fold_cap, CD_TOL, CD_MAX_SWEEPS)
    return float(grid[best]), curve


@dataclass
class LassoFit:
    """One fitted model: coefficients on both scales plus fit metadata."""

    column_names: list
    coef: np.ndarray          # original scale, zero for dropped columns
    intercept: float          # original scale
    coef_std: np.ndarray      # standardized scale, zero for dropped columns
    lam: float
    lam_index: int
    lambdas: np.ndarray
    cv_curve: np.ndarray
    standardizer: Standardizer
    dropped: dict
    n_train: int
    seed: object = None

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.coef_std)

    @property
    def active_names(self) -> list:
        return [self.column_names[i] for i in self.active]

    def predict_row(self, row: np.ndarray) -> float:
        row = np.asarray(row, dtype=float).ravel()
        if row.shape[0] != len(self.column_names):
            raise LassoError(
                f"row has {row.shape[0]} values, model has {len(self.column_names)} columns")
        return float(self.intercept + self.coef @ row)

    def to_json(self) -> str:
        return json.dumps({
            "columns": list(self.column_names),
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "lambda": self.lam,
            "lambda_index": self.lam_index,
            "seed": _jsonable_seed(self.seed),
            "dropped": self.dropped,
            "n_train": self.n_train,
        })


def _jsonable_seed(seed):
    if seed is None or isinstance(seed, (int, str)):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return [int(e) for e in np.atleast_1d(seed.entropy)]
    return list(seed)


def predict(fit: LassoFit, row) -> float:
    """Forecast for one feature row in original units.

    ``row`` is either a mapping from column name to value or a vector aligned
    with the fit's columns.
    """
    if isinstance(row, dict):
        missing = [c for c in fit.column_names if c not in row]
        if missing:
            raise LassoError(f"row is missing column(s) {missing[:5]}")
        row = np.array([row[c] for c in fit.column_names], dtype=float)
    return fit.predict_row(row)


def fit_standardized_cv(Xs, ys, std: Standardizer, column_names, seed=0,
                        k: int = 7, n_lambda: int = N_LAMBDA,
                        fold_tol: float = 1e-5, fold_cap: int = 1000,
                        dropped=None, G_raw=None, c_raw=None) -> LassoFit:
    """Cross-validate and refit on already-standardized data.

    ``Xs``/``ys`` hold the retained columns only; ``column_names`` covers all
    columns including the dropped ones recorded in ``std.kept``. Callers that
    maintain cross-products incrementally can pass ``G_raw = Xs'Xs`` and
    ``c_raw = Xs'ys`` to skip recomputing them.
    """
    n = ys.shape[0]
    p_all = len(column_names)
    dropped = dict(dropped or {})
    for j in np.flatnonzero(~std.kept):
        dropped.setdefault(column_names[j], "zero variance")
    grid = lambda_grid(Xs, ys, n_lambda)

    fold_ids = fold_assignment(n, k, seed)
    p = Xs.shape[1]
    if p == 0 or grid.shape[0] == 1:
        beta_std_kept = np.zeros(p)
        curve = np.full(grid.shape, float(np.mean(ys ** 2)))
        best = 0
    else:
        inputs = _cv_kernel_inputs(Xs, ys, fold_ids, k, G_raw, c_raw)
        curve, best, beta_std_kept = _kernels.cv_curve_and_fit(
            *inputs, grid, fold_tol, fold_cap, CD_TOL, CD_MAX_SWEEPS)
        best = int(best)

    coef_std = np.zeros(p_all)
    coef_std[std.kept] = beta_std_kept
    coef = np.zeros(p_all)
    coef[std.kept] = std.y_scale * beta_std_kept / std.sd[std.kept]
    intercept = std.y_mean - float(coef @ std.mean)
    return LassoFit(list(column_names), coef, intercept, coef_std, float(grid[best]),
                    best, grid, curve, std, dropped, n, seed)


def fit_lasso_cv(X, y, column_names=None, seed=0, k: int = 7,
                 n_lambda: int = N_LAMBDA, fold_tol: float = 1e-5,
                 fold_cap: int = 1000, dropped=None) -> LassoFit:
    """Standardize, build the lambda grid, cross-validate and refit.

    The returned fit carries original-scale coefficients and intercept so that
    prediction works directly on raw feature rows. ``dropped`` may carry
    names already removed upstream (recorded, coefficient zero).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p_all = X.shape
    if column_names is None:
        column_names = [f"x{j}" for j in range(p_all)]
    if len(column_names) != p_all:
        raise LassoError("column_names do not match X")
    Xs, ys, std = standardize(X, y)
    return fit_standardized_cv(Xs, ys, std, column_names, seed=seed, k=k,
                               n_lambda=n_lambda, fold_tol=fold_tol,
                               fold_cap=fold_cap, dropped=dropped)
