"""Numba kernels for the coordinate-descent solvers.

These are private: the public entry points in `solvers` validate inputs,
handle standardization and assemble results. All kernels are pure functions
of their inputs (plus explicit in-place state) and bit-deterministic.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# status codes returned by glasso_bcd
GLASSO_OK = 0
GLASSO_MAXITER = 1
GLASSO_NUMERIC = 2


@njit(cache=True)
def soft_threshold(value, threshold):
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


@njit(cache=True)
def max_abs_inner(Xs, y):
    """max_j |Xs[:, j] . y| with the same accumulation order as lasso_cd."""
    n, m = Xs.shape
    worst = 0.0
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += Xs[i, j] * y[i]
        if abs(acc) > worst:
            worst = abs(acc)
    return worst


@njit(cache=True)
def lasso_kkt_residual(Xs, r, beta, lam):
    """Max KKT residual of RSS + lam*||beta||_1 on standardized columns."""
    n, m = Xs.shape
    worst = 0.0
    for j in range(m):
        g = 0.0
        for i in range(n):
            g += Xs[i, j] * r[i]
        g = -2.0 * g
        if beta[j] == 0.0:
            resid = abs(g) - lam
            if resid < 0.0:
                resid = 0.0
        elif beta[j] > 0.0:
            resid = abs(g + lam)
        else:
            resid = abs(g - lam)
        if resid > worst:
            worst = resid
    return worst


@njit(cache=True)
def lasso_cd(Xs, r, beta, colsq, lam, tol, kkt_tol, max_sweeps):
    """Coordinate descent for min ||y - Xs beta||^2 + lam * ||beta||_1.

    Xs has centered columns; colsq[j] = sum(Xs[:, j]**2) (0 for dropped
    columns, which are skipped). beta and the residual r = y - Xs @ beta are
    updated in place (warm starts). Declares convergence only once the KKT
    residual is within kkt_tol.

    Returns (sweeps, converged, kkt_residual).
    """
    n, m = Xs.shape
    half_lam = 0.5 * lam
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        max_change = 0.0
        for j in range(m):
            cj = colsq[j]
            if cj == 0.0:
                continue
            bj = beta[j]
            rho = cj * bj
            for i in range(n):
                rho += Xs[i, j] * r[i]
            bn = soft_threshold(rho, half_lam) / cj
            if bn != bj:
                d = bn - bj
                for i in range(n):
                    r[i] -= d * Xs[i, j]
                beta[j] = bn
                ad = abs(d)
                if ad > max_change:
                    max_change = ad
        if max_change < tol:
            resid = lasso_kkt_residual(Xs, r, beta, lam)
            if resid <= kkt_tol:
                return sweeps, True, resid
    resid = lasso_kkt_residual(Xs, r, beta, lam)
    return sweeps, resid <= kkt_tol, resid


@njit(cache=True, fastmath={"contract", "arcp", "nsz"})
def glasso_bcd(S, Lam, W, Omega, Beta, outer_thr, inner_thr, max_sweeps,
               inner_max_sweeps):
    """Block coordinate descent for the element-wise penalized graphical lasso.

    Maximizes log det(Omega) - tr(S Omega) - sum_{i!=j} Lam_ij |Omega_ij| by
    cycling lasso subproblems over columns of the working covariance W.
    W, Omega and the per-column subproblem coefficients Beta are updated in
    place, so a caller can warm-start along a penalty path. W's diagonal must
    equal S's and is never touched (unpenalized diagonal).

    Returns (sweeps, status) with status GLASSO_OK / GLASSO_MAXITER /
    GLASSO_NUMERIC.
    """
    p = S.shape[0]
    v = np.empty(p)
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        change_sum = 0.0
        for idx in range(p):
            beta = Beta[:, idx]
            # v = W @ beta, exploiting sparsity of beta and symmetry of W
            for i in range(p):
                v[i] = 0.0
            for mcol in range(p):
                bm = beta[mcol]
                if bm != 0.0:
                    for i in range(p):
                        v[i] += W[mcol, i] * bm
            # inner lasso on the off-column coordinates
            for _ in range(inner_max_sweeps):
                max_change = 0.0
                for k in range(p):
                    if k == idx:
                        continue
                    wkk = W[k, k]
                    bk = beta[k]
                    a = S[idx, k] - (v[k] - wkk * bk)
                    bn = soft_threshold(a, Lam[idx, k]) / wkk
                    if bn != bk:
                        d = bn - bk
                        for i in range(p):
                            v[i] += d * W[k, i]
                        beta[k] = bn
                        ad = abs(d)
                        if ad > max_change:
                            max_change = ad
                if max_change < inner_thr:
                    break
            # write back column idx of W and Omega
            dot_vb = 0.0
            for k in range(p):
                if k != idx:
                    change_sum += abs(v[k] - W[idx, k])
                    W[idx, k] = v[k]
                    W[k, idx] = v[k]
                    dot_vb += v[k] * beta[k]
            denom = W[idx, idx] - dot_vb
            if not np.isfinite(denom):
                return sweeps, GLASSO_NUMERIC
            if denom < 1e-12 * W[idx, idx]:
                # transiently indefinite working state (near-singular S at a
                # weak penalty); clamp and let later sweeps restore it
                denom = 1e-12 * W[idx, idx]
            o22 = 1.0 / denom
            Omega[idx, idx] = o22
            for k in range(p):
                if k != idx:
                    ok = -beta[k] * o22
                    Omega[idx, k] = ok
                    Omega[k, idx] = ok
        if not np.isfinite(change_sum):
            return sweeps, GLASSO_NUMERIC
        if change_sum / (p * (p - 1)) < outer_thr:
            return sweeps, GLASSO_OK
    return sweeps, GLASSO_MAXITER
