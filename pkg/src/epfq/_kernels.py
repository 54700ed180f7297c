"""Compiled inner loops (numba).

Two hot spots live here: the cyclic coordinate descent used by every LASSO
fit, and the exact two-parameter quantile regression fitted for every
(day, hour, probability level) of a quantile surface.

The CD kernel works on Gram matrices (G = X'X/n, c = X'y/n) so one update
costs O(p) regardless of n, exploits symmetry for contiguous row access, and
alternates full sweeps with sweeps over the current active set.

The QR kernel relies on the fact that for a candidate line with residuals
r_i, the check loss sums to tau * sum(r_i) - sum(min(r_i, 0)); both sums are
independent of tau, so one O(n) pass per candidate line prices all
probability levels at once.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def cd_solve(G, c, lam, beta, grad, active, tol, max_sweeps):
    """Cyclic coordinate descent with soft-thresholding at a single lambda.

    ``beta`` and ``grad`` (grad_j = c_j - sum_k G_jk beta_k) are updated in
    place so consecutive calls warm-start; ``active`` carries the working set
    across calls. Each round is a full sweep that refreshes the working set,
    followed by sweeps over the working set alone. Converged when a full
    sweep moves no coefficient by more than ``tol``; gives up after
    ``max_sweeps`` sweeps of either kind.
    """
    p = G.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                active[j] = False
                continue
            rho = grad[j] + gjj * beta[j]
            if rho > lam:
                bj = (rho - lam) / gjj
            elif rho < -lam:
                bj = (rho + lam) / gjj
            else:
                bj = 0.0
            d = bj - beta[j]
            if d != 0.0:
                Gj = G[j]
                for k in range(p):
                    grad[k] -= Gj[k] * d
                beta[j] = bj
                if abs(d) > max_delta:
                    max_delta = abs(d)
            active[j] = bj != 0.0
        if max_delta < tol:
            break
        while sweeps < max_sweeps:
            sweeps += 1
            max_delta = 0.0
            for j in range(p):
                if not active[j]:
                    continue
                gjj = G[j, j]
                rho = grad[j] + gjj * beta[j]
                if rho > lam:
                    bj = (rho - lam) / gjj
                elif rho < -lam:
                    bj = (rho + lam) / gjj
                else:
                    bj = 0.0
                d = bj - beta[j]
                if d != 0.0:
                    Gj = G[j]
                    for k in range(p):
                        grad[k] -= Gj[k] * d
                    beta[j] = bj
                    if abs(d) > max_delta:
                        max_delta = abs(d)
            if max_delta < tol:
                break
    return sweeps


@njit(cache=True, fastmath=True)
def _objective_from_grad(beta, c, grad, lam):
    """(1/2) b'Gb - c'b + lam |b|_1, using Gb = c - grad."""
    f = 0.0
    for j in range(beta.shape[0]):
        f += -0.5 * beta[j] * (c[j] + grad[j]) + lam * abs(beta[j])
    return f


_AA_DEPTH = 5


@njit(cache=True, fastmath=True)
def _anderson_jump(lam, c, beta, grad, hist_b, hist_g, hist_r, n_hist):
    """Anderson step over the last few sweep iterates, objective-guarded.

    Finds affine weights (summing to one) that minimise the combined sweep
    step over the stored history; because the gradient is affine in beta, the
    candidate's gradient is the same combination of stored gradients, so the
    exact objective of the candidate costs O(p). The jump is taken only when
    it strictly lowers the objective. Returns True when accepted.
    """
    p = beta.shape[0]
    K = n_hist
    M = np.empty((K, K))
    for a in range(K):
        ra = hist_r[a]
        for b in range(a, K):
            s = 0.0
            rb = hist_r[b]
            for j in range(p):
                s += ra[j] * rb[j]
            M[a, b] = s
            M[b, a] = s
    ridge = 0.0
    for a in range(K):
        ridge += M[a, a]
    ridge = 1e-10 * (ridge / K + 1e-300)
    for a in range(K):
        M[a, a] += ridge
    # tiny K x K solve, Gaussian elimination with partial pivoting
    w = np.ones(K)
    for col in range(K):
        piv = col
        big = abs(M[col, col])
        for r in range(col + 1, K):
            if abs(M[r, col]) > big:
                big = abs(M[r, col])
                piv = r
        if big == 0.0:
            return False
        if piv != col:
            for cc in range(K):
                tmp = M[col, cc]
                M[col, cc] = M[piv, cc]
                M[piv, cc] = tmp
            tmp = w[col]
            w[col] = w[piv]
            w[piv] = tmp
        for r in range(col + 1, K):
            f = M[r, col] / M[col, col]
            if f != 0.0:
                for cc in range(col, K):
                    M[r, cc] -= f * M[col, cc]
                w[r] -= f * w[col]
    for col in range(K - 1, -1, -1):
        s = w[col]
        for cc in range(col + 1, K):
            s -= M[col, cc] * w[cc]
        w[col] = s / M[col, col]
    tot = w.sum()
    if tot == 0.0 or not np.isfinite(tot):
        return False
    w /= tot
    f_cur = _objective_from_grad(beta, c, grad, lam)
    f_ex = 0.0
    for j in range(p):
        bx = 0.0
        gx = 0.0
        for a in range(K):
            bx += w[a] * hist_b[a, j]
            gx += w[a] * hist_g[a, j]
        f_ex += -0.5 * bx * (c[j] + gx) + lam * abs(bx)
    if not f_ex < f_cur:
        return False
    for j in range(p):
        bx = 0.0
        gx = 0.0
        for a in range(K):
            bx += w[a] * hist_b[a, j]
            gx += w[a] * hist_g[a, j]
        beta[j] = bx
        grad[j] = gx
    return True


@njit(cache=True)
def _face_newton(G, c, lam, beta, grad):
    """Jump toward the stationary point of the current sign-restricted face.

    Solves G_AA x = c_A - lam * sign(beta_A) on the support A (least squares,
    so rank-deficient faces from duplicated columns are fine) and backtracks
    along the segment from beta to x until the exact objective decreases.
    Because the gradient is affine in beta, each trial point costs O(p) once
    G d is formed. Returns True when a step was taken.
    """
    p = beta.shape[0]
    m = 0
    for j in range(p):
        if beta[j] != 0.0:
            m += 1
    if m == 0:
        return False
    idx = np.empty(m, np.int64)
    t = 0
    for j in range(p):
        if beta[j] != 0.0:
            idx[t] = j
            t += 1
    A = np.empty((m, m))
    rhs = np.empty(m)
    trace = 0.0
    for a in range(m):
        ja = idx[a]
        Gj = G[ja]
        for b in range(m):
            A[a, b] = Gj[idx[b]]
        trace += A[a, a]
        rhs[a] = c[ja] - (lam if beta[ja] > 0.0 else -lam)
    # tiny ridge keeps duplicated-column faces solvable by a direct solve
    ridge = 1e-10 * (trace / m + 1e-300)
    for a in range(m):
        A[a, a] += ridge
    sol = np.linalg.solve(A, rhs)
    gdir = np.zeros(p)
    moved = False
    for a in range(m):
        ja = idx[a]
        d = sol[a] - beta[ja]
        if d != 0.0:
            moved = True
            Gj = G[ja]
            for k in range(p):
                gdir[k] += Gj[k] * d
    if not moved:
        return False
    # beta is zero off the support, so objectives reduce to support sums
    f_cur = 0.0
    for a in range(m):
        ja = idx[a]
        f_cur += -0.5 * beta[ja] * (c[ja] + grad[ja]) + lam * abs(beta[ja])
    step = 1.0
    for _ in range(8):
        f_try = 0.0
        for a in range(m):
            ja = idx[a]
            bx = beta[ja] + step * (sol[a] - beta[ja])
            gx = grad[ja] - step * gdir[ja]
            f_try += -0.5 * bx * (c[ja] + gx) + lam * abs(bx)
        if f_try < f_cur:
            for a in range(m):
                ja = idx[a]
                beta[ja] += step * (sol[a] - beta[ja])
            for k in range(p):
                grad[k] -= step * gdir[k]
            return True
        step *= 0.5
    return False


@njit(cache=True, fastmath=True)
def cd_polish(G, c, lam, beta, grad, active, tol, max_sweeps):
    """cd_solve plus guarded acceleration of the working-set iterates.

    Near-duplicate columns make plain cyclic descent crawl through thousands
    of tiny, nearly geometric steps. Two accelerators attack that: Anderson
    extrapolation combines the last few sweep iterates with affine weights
    that cancel the step sequence, and a face-Newton jump solves the
    stationarity system on the stable support directly. Every jump is
    accepted only when it strictly lowers the exact objective, so the result
    never depends on the extrapolation. Convergence is still certified by a
    full sweep moving no coefficient by more than ``tol``, exactly as in
    cd_solve.
    """
    p = G.shape[0]
    hist_b = np.empty((_AA_DEPTH, p))
    hist_g = np.empty((_AA_DEPTH, p))
    hist_r = np.empty((_AA_DEPTH, p))
    beta_old = np.empty(p)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                active[j] = False
                continue
            rho = grad[j] + gjj * beta[j]
            if rho > lam:
                bj = (rho - lam) / gjj
            elif rho < -lam:
                bj = (rho + lam) / gjj
            else:
                bj = 0.0
            d = bj - beta[j]
            if d != 0.0:
                Gj = G[j]
                for k in range(p):
                    grad[k] -= Gj[k] * d
                beta[j] = bj
                if abs(d) > max_delta:
                    max_delta = abs(d)
            active[j] = bj != 0.0
        if max_delta < tol:
            break
        _face_newton(G, c, lam, beta, grad)
        n_hist = 0
        since_face = 0
        while sweeps < max_sweeps:
            sweeps += 1
            beta_old[:] = beta
            max_delta = 0.0
            support_changed = False
            for j in range(p):
                if not active[j]:
                    continue
                gjj = G[j, j]
                rho = grad[j] + gjj * beta[j]
                if rho > lam:
                    bj = (rho - lam) / gjj
                elif rho < -lam:
                    bj = (rho + lam) / gjj
                else:
                    bj = 0.0
                d = bj - beta[j]
                if d != 0.0:
                    if (bj == 0.0) != (beta[j] == 0.0):
                        support_changed = True
                    Gj = G[j]
                    for k in range(p):
                        grad[k] -= Gj[k] * d
                    beta[j] = bj
                    if abs(d) > max_delta:
                        max_delta = abs(d)
            if max_delta < tol:
                break
            since_face += 1
            if since_face >= 12:
                since_face = 0
                if _face_newton(G, c, lam, beta, grad):
                    n_hist = 0
                    continue
            if support_changed:
                # the sweep map is only affine while signs are frozen
                n_hist = 0
                continue
            if n_hist == _AA_DEPTH:
                for a in range(_AA_DEPTH - 1):
                    hist_b[a] = hist_b[a + 1]
                    hist_g[a] = hist_g[a + 1]
                    hist_r[a] = hist_r[a + 1]
                n_hist -= 1
            hist_b[n_hist] = beta
            hist_g[n_hist] = grad
            for j in range(p):
                hist_r[n_hist, j] = beta[j] - beta_old[j]
            n_hist += 1
            if n_hist >= 3 and _anderson_jump(lam, c, beta, grad,
                                              hist_b, hist_g, hist_r, n_hist):
                n_hist = 0
    return sweeps


@njit(cache=True, fastmath=True)
def cv_curve_and_fit(G_folds, c_folds, XvalT, yval, nval, G_full, c_full,
                     lambdas, fold_tol, fold_cap, final_tol, final_max_sweeps):
    """Cross-validation curve over a lambda grid plus the final fit.

    Per fold: one warm-started CD path over the full grid; the validation MSE
    of every lambda is accumulated into the curve. Fold problems stay on the
    unnormalized cross-product scale (the penalty is multiplied by the
    training row count instead, which gives the same minimiser), and
    validation predictions are updated incrementally from the coefficients
    that moved. The winning lambda (argmin, first occurrence = largest lambda
    on a descending grid) is then refitted on the full data to ``final_tol``,
    warm-started from the last fold's solution.

    ``XvalT`` is (k, p, nv_max): validation rows transposed so the update for
    one coefficient reads a contiguous slice.

    Returns (curve, best_index, beta_final).
    """
    k, p = c_folds.shape
    n_lam = lambdas.shape[0]
    nv_max = XvalT.shape[2]
    curve = np.zeros(n_lam)
    betas_last = np.zeros((n_lam, p))
    beta = np.empty(p)
    beta_prev = np.empty(p)
    grad = np.empty(p)
    pred = np.empty(nv_max)
    active = np.zeros(p, np.bool_)
    n_total = 0
    for f in range(k):
        n_total += nval[f]
    for f in range(k):
        G = G_folds[f]
        c = c_folds[f]
        ntr = float(n_total - nval[f])
        beta[:] = 0.0
        beta_prev[:] = 0.0
        grad[:] = c
        nv = nval[f]
        for r in range(nv):
            pred[r] = 0.0
        for li in range(n_lam):
            cd_solve(G, c, lambdas[li] * ntr, beta, grad, active, fold_tol, fold_cap)
            for j in range(p):
                d = beta[j] - beta_prev[j]
                if d != 0.0:
                    col = XvalT[f, j]
                    for r in range(nv):
                        pred[r] += col[r] * d
                    beta_prev[j] = beta[j]
            sse = 0.0
            for r in range(nv):
                e = pred[r] - yval[f, r]
                sse += e * e
            curve[li] += sse / nv
            if f == k - 1:
                betas_last[li] = beta
    for li in range(n_lam):
        curve[li] /= k
    best = 0
    best_val = curve[0]
    for li in range(1, n_lam):
        if curve[li] < best_val:
            best_val = curve[li]
            best = li
    beta[:] = 0.0
    if final_max_sweeps > 0:
        # warm start from the last fold's solution at the winning lambda
        beta[:] = betas_last[best]
        grad[:] = c_full
        for j in range(p):
            bj = beta[j]
            if bj != 0.0:
                Gj = G_full[j]
                for kk in range(p):
                    grad[kk] -= Gj[kk] * bj
        cd_polish(G_full, c_full, lambdas[best], beta, grad, active,
                  final_tol, final_max_sweeps)
    return curve, best, beta


@njit(cache=True, fastmath=True, inline="always")
def _qr_scan_window(xf, xa, lo, hi, taus, best_b0, best_b1, best_obj):
    """Scan all two-point candidate lines on xf[lo:hi] / xa[lo:hi].

    For each candidate the residual sums A = sum(r) and B = sum(min(r, 0))
    price every tau via obj = tau * A - B. Returns False when every pair of
    points shares the same regressor value (degenerate window).
    """
    m = hi - lo
    n_tau = taus.shape[0]
    for t in range(n_tau):
        best_obj[t] = 1e300   # finite sentinel, fastmath-safe
        best_b0[t] = 0.0
        best_b1[t] = 0.0
    sxf = 0.0
    sxa = 0.0
    for i in range(lo, hi):
        sxf += xf[i]
        sxa += xa[i]
    found = False
    for i in range(lo, hi):
        for j in range(i + 1, hi):
            dx = xf[i] - xf[j]
            if dx == 0.0:
                continue
            found = True
            b1 = (xa[i] - xa[j]) / dx
            b0 = xa[i] - b1 * xf[i]
            A = sxa - b0 * m - b1 * sxf
            B = 0.0
            for r in range(lo, hi):
                resid = xa[r] - b0 - b1 * xf[r]
                if resid < 0.0:
                    B += resid
            for t in range(n_tau):
                obj = taus[t] * A - B
                if obj < best_obj[t]:
                    best_obj[t] = obj
                    best_b0[t] = b0
                    best_b1[t] = b1
    return found


@njit(cache=True, fastmath=True)
def qr_fit_windows(xf, xa, out_start, n_out, n_window, taus):
    """Exact QR coefficients for a stream of rolling windows.

    For output slot o the window covers absolute day indices
    [out_start + o - n_window, out_start + o - 2]: the day being forecast and
    the day before it contribute no actual observations.

    The candidate lines through sample-point pairs are kept incrementally:
    stepping the window by one day drops the pairs touching the expired day,
    adds pairs touching the new day, and adjusts every survivor's negative
    residual sum by the swapped-out and swapped-in points in O(1). A
    candidate lives at most one window length, so no rounding drift can
    accumulate. Objectives price all probability levels per candidate via
    sum(check loss) = tau * A - B with A derived analytically.

    Returns (beta0, beta1, degenerate) with shapes (n_out, n_tau) x2, (n_out,).
    """
    n_tau = taus.shape[0]
    m = n_window - 1
    beta0 = np.zeros((n_out, n_tau))
    beta1 = np.zeros((n_out, n_tau))
    degenerate = np.zeros(n_out, np.bool_)
    cap = m * (m - 1) // 2
    cand_i = np.empty(cap, np.int64)
    cand_j = np.empty(cap, np.int64)
    cand_b0 = np.empty(cap)
    cand_b1 = np.empty(cap)
    cand_B = np.empty(cap)
    cand_A = np.empty(cap)
    n_cand = 0
    sxf = 0.0
    sxa = 0.0

    lo = out_start - n_window
    hi = out_start - 1
    for d in range(lo, hi):
        sxf += xf[d]
        sxa += xa[d]
    for i in range(lo, hi):
        for j in range(i + 1, hi):
            dx = xf[i] - xf[j]
            if dx == 0.0:
                continue
            b1 = (xa[i] - xa[j]) / dx
            b0 = xa[i] - b1 * xf[i]
            B = 0.0
            for r in range(lo, hi):
                resid = xa[r] - b0 - b1 * xf[r]
                if resid < 0.0:
                    B += resid
            cand_i[n_cand] = i
            cand_j[n_cand] = j
            cand_b0[n_cand] = b0
            cand_b1[n_cand] = b1
            cand_B[n_cand] = B
            n_cand += 1

    for o in range(n_out):
        if o > 0:
            day_out = out_start + o - 1 - n_window
            day_in = out_start + o - 2
            sxf += xf[day_in] - xf[day_out]
            sxa += xa[day_in] - xa[day_out]
            w = 0
            for ci in range(n_cand):
                if cand_i[ci] == day_out or cand_j[ci] == day_out:
                    continue
                r_out = xa[day_out] - cand_b0[ci] - cand_b1[ci] * xf[day_out]
                r_in = xa[day_in] - cand_b0[ci] - cand_b1[ci] * xf[day_in]
                B = cand_B[ci]
                if r_out < 0.0:
                    B -= r_out
                if r_in < 0.0:
                    B += r_in
                cand_i[w] = cand_i[ci]
                cand_j[w] = cand_j[ci]
                cand_b0[w] = cand_b0[ci]
                cand_b1[w] = cand_b1[ci]
                cand_B[w] = B
                w += 1
            n_cand = w
            w_lo = out_start + o - n_window
            w_hi = out_start + o - 1
            for i in range(w_lo, w_hi - 1):
                dx = xf[i] - xf[day_in]
                if dx == 0.0:
                    continue
                b1 = (xa[i] - xa[day_in]) / dx
                b0 = xa[i] - b1 * xf[i]
                B = 0.0
                for r in range(w_lo, w_hi):
                    resid = xa[r] - b0 - b1 * xf[r]
                    if resid < 0.0:
                        B += resid
                cand_i[n_cand] = i
                cand_j[n_cand] = day_in
                cand_b0[n_cand] = b0
                cand_b1[n_cand] = b1
                cand_B[n_cand] = B
                n_cand += 1
        if n_cand == 0:
            degenerate[o] = True
            continue
        mf = float(m)
        for ci in range(n_cand):
            cand_A[ci] = sxa - cand_b0[ci] * mf - cand_b1[ci] * sxf
        for t in range(n_tau):
            tau = taus[t]
            best = 1e300
            bi = 0
            for ci in range(n_cand):
                obj = tau * cand_A[ci] - cand_B[ci]
                if obj < best:
                    best = obj
                    bi = ci
            beta0[o, t] = cand_b0[bi]
            beta1[o, t] = cand_b1[bi]
    return beta0, beta1, degenerate


@njit(cache=True)
def qr_fit_single(xf, xa, taus):
    """Exact QR on one sample; returns (beta0, beta1, degenerate)."""
    n_tau = taus.shape[0]
    b0 = np.empty(n_tau)
    b1 = np.empty(n_tau)
    obj = np.empty(n_tau)
    ok = _qr_scan_window(xf, xa, 0, xf.shape[0], taus, b0, b1, obj)
    return b0, b1, not ok
