"""
The LASSO estimator, from scratch
=================================

Price models here can have hundreds of regressors per hour, so estimation is
L1-penalised least squares: standardize everything, walk a descending grid of
100 penalties with warm-started cyclic coordinate descent, pick the penalty
by 7-fold cross-validation, refit, and map coefficients back to original
units. This script shows the moving parts on a small problem.
"""

import numpy as np

from epfq.lasso import (cv_select, fit_coordinate_descent, fit_lasso_cv,
                        kkt_violation, lambda_grid, predict, standardize)

rng = np.random.default_rng(0)
n, p = 200, 12
X = rng.standard_normal((n, p))
true_beta = np.zeros(p)
true_beta[[0, 3, 7]] = [2.0, -1.5, 0.8]
y = X @ true_beta + 0.7 * rng.standard_normal(n)

# --- standardization and the penalty grid ------------------------------------
Xs, ys, std = standardize(X, y)
grid = lambda_grid(Xs, ys)
print(f"lambda grid: {len(grid)} points, {grid[0]:.4f} down to {grid[-1]:.2e}")

beta_at_max = fit_coordinate_descent(Xs, ys, grid[0] * 1.0001)
print("at lambda_max everything is zero:", np.count_nonzero(beta_at_max), "active")

# --- the solution path --------------------------------------------------------
print("\nactive set along the path (every 10th lambda):")
beta = None
for i, lam in enumerate(grid):
    beta = fit_coordinate_descent(Xs, ys, lam, warm_start=beta)
    if i % 10 == 0:
        print(f"  lambda {lam:9.5f}: {np.count_nonzero(beta):2d} nonzero, "
              f"|beta|_1 = {np.abs(beta).sum():6.3f}")

# Every fit satisfies the stationarity conditions: residual correlations of
# active coordinates sit exactly at +-lambda, the rest strictly inside.
lam_mid = grid[40]
beta_mid = fit_coordinate_descent(Xs, ys, lam_mid)
print(f"\nKKT violation at a mid-path fit: {kkt_violation(Xs, ys, beta_mid, lam_mid):.2e}")

# --- cross-validation ----------------------------------------------------------
lam_best, curve = cv_select(Xs, ys, grid, k=7, seed=0)
print(f"\n7-fold CV picks lambda = {lam_best:.5f} "
      f"(grid index {int(np.argmin(curve))}, curve min {curve.min():.4f})")

# --- the composite fit ----------------------------------------------------------
fit = fit_lasso_cv(X, y, column_names=[f"x{j}" for j in range(p)], seed=0)
print("\nrecovered coefficients (original scale):")
for name, est, truth in zip(fit.column_names, fit.coef, true_beta):
    if est != 0.0 or truth != 0.0:
        print(f"  {name}: fitted {est:7.3f}   true {truth:5.2f}")
print("prediction for a fresh row:", round(predict(fit, rng.standard_normal(p)), 3))
