"""Penalized estimators: lasso regression and element-wise penalized
graphical lasso, with KKT verification oracles.

The lasso minimizes sum((y - b0 - X b)^2) + lam * ||b||_1 with an unpenalized
intercept; columns are standardized internally (zero mean, unit variance,
divisor n) and coefficients mapped back to the original scale. The graphical
lasso maximizes log det(O) - tr(S O) - sum_{i != j} L_ij |O_ij| by block
coordinate descent on the working covariance; the diagonal is never
penalized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _fast
from .util import standardize_columns, support_to_edge_vector

SUPPORT_TOLERANCE = 1e-8


@dataclass
class DesignMatrix:
    """n x p observation matrix with unique feature names."""

    values: np.ndarray
    feature_names: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        n, p = self.values.shape
        if n < 2:
            raise ValueError(f"need at least 2 observations, got {n}")
        if p < 1:
            raise ValueError("need at least 1 feature")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("design matrix contains non-finite entries")
        if len(self.feature_names) != p:
            raise ValueError("feature_names length does not match p")
        if len(set(self.feature_names)) != p:
            raise ValueError("feature names must be unique")

    @classmethod
    def from_array(cls, values, feature_names=None) -> "DesignMatrix":
        values = np.asarray(values, dtype=np.float64)
        if feature_names is None:
            feature_names = [f"v{j + 1}" for j in range(values.shape[1])]
        return cls(values, list(feature_names))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def _as_design(X) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        return X
    return DesignMatrix.from_array(X)


@dataclass
class LassoFit:
    coefficients: np.ndarray  # original scale
    intercept: float
    lam: float
    iterations: int
    converged: bool

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients != 0.0)


@dataclass
class KKTReport:
    max_residual: float
    tolerance: float
    passed: bool


@dataclass
class CovarianceMatrix:
    """Symmetric positive semidefinite matrix (tolerance -1e-8 * max eig)."""

    values: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.values, dtype=np.float64)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("covariance must be square")
        if not np.all(np.isfinite(S)):
            raise ValueError("covariance contains non-finite entries")
        if np.max(np.abs(S - S.T)) > 1e-12:
            raise ValueError("covariance is not symmetric within 1e-12")
        if np.any(np.diag(S) < 0):
            raise ValueError("covariance has a negative diagonal entry")
        eigs = np.linalg.eigvalsh(S)
        if eigs[0] < -1e-8 * max(eigs[-1], 0.0):
            raise ValueError(
                f"covariance is not positive semidefinite (min eig {eigs[0]:g})"
            )
        self.values = S

    @property
    def p(self) -> int:
        return self.values.shape[0]


def _as_cov(S) -> np.ndarray:
    if isinstance(S, CovarianceMatrix):
        return S.values
    return CovarianceMatrix(np.asarray(S, dtype=np.float64)).values


@dataclass
class PenaltyMatrix:
    """Symmetric nonnegative penalties, zero diagonal (off-diagonal only)."""

    values: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.values, dtype=np.float64)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValueError("penalty matrix must be square")
        if np.max(np.abs(L - L.T)) > 0:
            raise ValueError("penalty matrix must be symmetric")
        if np.any(L < 0):
            raise ValueError("penalties must be nonnegative")
        if np.any(np.diag(L) != 0):
            raise ValueError("penalty diagonal must be zero")
        self.values = L

    @classmethod
    def constant(cls, p: int, lam: float) -> "PenaltyMatrix":
        if lam < 0:
            raise ValueError("penalty must be nonnegative")
        L = np.full((p, p), float(lam))
        np.fill_diagonal(L, 0.0)
        return cls(L)


@dataclass
class PrecisionEstimate:
    omega: np.ndarray
    support: np.ndarray  # symmetric 0/1, zero diagonal
    lambda_or_matrix: object
    converged: bool
    iterations: int = 0

    @property
    def edge_count(self) -> int:
        return int(self.support.sum()) // 2


# ---------------------------------------------------------------------------
# lasso


def lasso_lambda_max(X, y) -> float:
    """Smallest penalty at which the lasso solution is exactly zero.

    Uses the same accumulation order as the solver so the bound is exact at
    the returned value, not just up to rounding.
    """
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64)
    Xs, _, _, _ = standardize_columns(X.values)
    Xs = np.asfortranarray(Xs)
    yc = y - y.mean()
    return 2.0 * float(_fast.max_abs_inner(Xs, yc))


def fit_lasso(X, y, lam, tol=1e-7, kkt_tol=1e-6, max_sweeps=100_000,
              warm_start=None) -> LassoFit:
    """Solve the lasso at a single penalty value.

    warm_start, if given, is a coefficient vector on the standardized scale
    (as produced by a previous fit at a nearby penalty).
    """
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.n,):
        raise ValueError(f"y must have length n={X.n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite entries")
    if lam < 0:
        raise ValueError("penalty must be nonnegative")

    Xs, means, sds, constant = standardize_columns(X.values)
    if constant.any():
        names = [X.feature_names[j] for j in np.flatnonzero(constant)]
        warnings.warn(
            f"constant columns dropped from the lasso fit: {names}",
            stacklevel=2,
        )
    Xs = np.asfortranarray(Xs)
    colsq = np.einsum("ij,ij->j", Xs, Xs)
    yc = y - y.mean()

    beta = np.zeros(X.p)
    if warm_start is not None:
        beta[:] = warm_start
        beta[constant] = 0.0
    r = yc - Xs @ beta
    sweeps, converged, _ = _fast.lasso_cd(
        Xs, r, beta, colsq, float(lam), tol, kkt_tol, max_sweeps
    )

    coef = np.zeros(X.p)
    ok = ~constant
    coef[ok] = beta[ok] / sds[ok]
    intercept = float(y.mean() - coef @ means)
    return LassoFit(coef, intercept, float(lam), int(sweeps), bool(converged))


def lasso_path(X, y, lambdas, **options) -> list[LassoFit]:
    """Warm-started lasso fits along a strictly descending penalty grid."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.ndim != 1 or len(lambdas) == 0:
        raise ValueError("lambda grid must be a non-empty 1-d sequence")
    if len(lambdas) > 1 and not np.all(np.diff(lambdas) < 0):
        raise ValueError("lambda grid must be strictly descending")
    X = _as_design(X)
    _, _, sds, constant = standardize_columns(X.values)
    fits = []
    warm = None
    for lam in lambdas:
        fit = fit_lasso(X, y, lam, warm_start=warm, **options)
        std_coef = fit.coefficients.copy()
        std_coef[~constant] *= sds[~constant]
        warm = std_coef
        fits.append(fit)
    return fits


def check_kkt_lasso(X, y, fit: LassoFit, tol=1e-6) -> KKTReport:
    """Verify lasso stationarity under the solver's standardization.

    For zero coefficients |g_j| <= lam + tol, for nonzero coefficients
    |g_j + lam * sign(b_j)| <= tol, with g the gradient of the residual sum
    of squares on standardized columns.
    """
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64)
    Xs, _, sds, constant = standardize_columns(X.values)
    Xs = np.asfortranarray(Xs)
    beta_std = fit.coefficients * np.where(constant, 0.0, sds)
    r = (y - y.mean()) - Xs @ beta_std
    resid = float(_fast.lasso_kkt_residual(Xs, r, beta_std, float(fit.lam)))
    return KKTReport(resid, tol, resid <= tol)


# ---------------------------------------------------------------------------
# empirical covariance


def empirical_covariance(X) -> CovarianceMatrix:
    """Correlation matrix of the columns (maximum-likelihood, divisor n)."""
    X = _as_design(X)
    Xs, _, _, constant = standardize_columns(X.values)
    if constant.any():
        j = int(np.flatnonzero(constant)[0])
        raise ValueError(
            f"column {X.feature_names[j]!r} is constant; correlation undefined"
        )
    S = (Xs.T @ Xs) / X.n
    S = (S + S.T) / 2.0
    np.fill_diagonal(S, 1.0)
    return CovarianceMatrix(S)


# ---------------------------------------------------------------------------
# graphical lasso


def glasso_lambda_max(S) -> float:
    """Smallest scalar penalty giving an empty graph: max off-diagonal |S|."""
    S = _as_cov(S)
    if S.shape[0] < 2:
        raise ValueError("need at least 2 variables")
    off = np.abs(S.copy())
    np.fill_diagonal(off, 0.0)
    return float(off.max())


def _as_penalty(penalty, p: int) -> np.ndarray:
    if isinstance(penalty, PenaltyMatrix):
        L = penalty.values
    elif np.isscalar(penalty):
        L = PenaltyMatrix.constant(p, float(penalty)).values
    else:
        L = PenaltyMatrix(np.asarray(penalty, dtype=np.float64)).values
    if L.shape[0] != p:
        raise ValueError("penalty size does not match covariance")
    return L


class GlassoState:
    """Warm-start state for a sequence of related graphical lasso solves.

    Starting from W = S keeps every column update's working matrix
    [[W11, s12], [s12', s22]] positive semidefinite, which keeps the Schur
    complements (the precision diagonal) nonnegative even for barely-PD S;
    a shrunk start would break that compatibility at weak penalties.
    """

    def __init__(self, S: np.ndarray):
        p = S.shape[0]
        self.W = S.copy()
        self.Omega = np.zeros((p, p))
        self.Beta = np.zeros((p, p))


def _glasso_thresholds(S: np.ndarray, tol: float):
    p = S.shape[0]
    off = np.abs(S[~np.eye(p, dtype=bool)])
    scale = float(off.mean()) if off.size and off.mean() > 0 else 1.0
    outer = tol * scale
    return outer, outer / 10.0


def _glasso_solve(S, Lam, state: GlassoState | None, tol, max_sweeps,
                  inner_max_sweeps):
    if state is None:
        state = GlassoState(S)
    outer_thr, inner_thr = _glasso_thresholds(S, tol)
    sweeps, status = _fast.glasso_bcd(
        S, Lam, state.W, state.Omega, state.Beta,
        outer_thr, inner_thr, max_sweeps, inner_max_sweeps,
    )
    if status == _fast.GLASSO_NUMERIC:
        # restart once from the conservative cold state
        state.__init__(S)
        sweeps, status = _fast.glasso_bcd(
            S, Lam, state.W, state.Omega, state.Beta,
            outer_thr, inner_thr, max_sweeps, inner_max_sweeps,
        )
        if status == _fast.GLASSO_NUMERIC:
            raise RuntimeError(
                "graphical lasso update became numerically unstable "
                "(covariance too ill-conditioned for this penalty)"
            )
    return state, int(sweeps), status == _fast.GLASSO_OK


def fit_glasso(S, penalty, tol=1e-4, max_sweeps=1000, inner_max_sweeps=1000,
               support_tolerance=SUPPORT_TOLERANCE,
               state: GlassoState | None = None) -> PrecisionEstimate:
    """Penalized precision estimate from a covariance matrix.

    penalty is a scalar (expanded to a constant off-diagonal matrix) or a
    PenaltyMatrix. tol scales the stopping rule: mean absolute change of the
    off-diagonal working covariance per sweep below tol * mean |S off-diag|.
    """
    Sv = _as_cov(S)
    p = Sv.shape[0]
    if p < 2:
        raise ValueError("graphical lasso needs at least 2 variables")
    Lam = _as_penalty(penalty, p)

    if not Lam.any():
        omega = np.linalg.inv(Sv)
        omega = (omega + omega.T) / 2.0
        support = (np.abs(omega) > support_tolerance).astype(np.int8)
        np.fill_diagonal(support, 0)
        return PrecisionEstimate(omega, support, penalty, True, 0)

    state, sweeps, converged = _glasso_solve(
        Sv, Lam, state, tol, max_sweeps, inner_max_sweeps
    )
    omega = state.Omega.copy()
    support = (np.abs(omega) > support_tolerance).astype(np.int8)
    np.fill_diagonal(support, 0)
    eigs = np.linalg.eigvalsh(omega)
    if eigs[0] <= 0:
        raise RuntimeError(
            f"graphical lasso produced a non positive definite estimate "
            f"(min eig {eigs[0]:g})"
        )
    return PrecisionEstimate(omega, support, penalty, converged, sweeps)


def glasso_path_supports(S, penalties, tol=1e-4, max_sweeps=1000,
                         inner_max_sweeps=1000,
                         support_tolerance=SUPPORT_TOLERANCE) -> np.ndarray:
    """Edge-support indicators along a penalty path, warm-started.

    penalties is an iterable of (p, p) penalty arrays (or scalars), ordered
    from stronger to weaker for the warm starts to pay off. Returns an
    (L, p*(p-1)/2) uint8 array in canonical edge order.
    """
    Sv = _as_cov(S) if not isinstance(S, np.ndarray) else S
    p = Sv.shape[0]
    state = GlassoState(Sv)
    rows = []
    for pen in penalties:
        Lam = pen if isinstance(pen, np.ndarray) else _as_penalty(pen, p)
        state, _, _ = _glasso_solve(Sv, Lam, state, tol, max_sweeps,
                                    inner_max_sweeps)
        sup = (np.abs(support_to_edge_vector(state.Omega))
               > support_tolerance).astype(np.uint8)
        rows.append(sup)
    return np.array(rows, dtype=np.uint8)


def check_kkt_glasso(S, penalty, est: PrecisionEstimate, tol=1e-5) -> KKTReport:
    """Verify graphical lasso stationarity with W recomputed as inv(omega).

    Off-diagonal: |W_ij - S_ij - L_ij sign(o_ij)| <= tol on the support,
    |W_ij - S_ij| <= L_ij + tol off it. Diagonal: W_ii = S_ii within tol.
    """
    Sv = _as_cov(S)
    p = Sv.shape[0]
    Lam = _as_penalty(penalty, p)
    omega = est.omega
    eigs = np.linalg.eigvalsh(omega)
    if eigs[0] <= 0:
        raise ValueError("precision estimate is singular or indefinite")
    W = np.linalg.inv(omega)
    gap = W - Sv
    off = ~np.eye(p, dtype=bool)
    nz = (est.support > 0) & off
    z = (est.support == 0) & off
    resid = np.abs(np.diag(gap)).max()
    if nz.any():
        resid = max(resid, np.abs(gap[nz] - Lam[nz] * np.sign(omega[nz])).max())
    if z.any():
        resid = max(resid, np.maximum(np.abs(gap[z]) - Lam[z], 0.0).max())
    resid = float(resid)
    return KKTReport(resid, tol, resid <= tol)
