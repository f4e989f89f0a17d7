"""Stability-score calibration of resampled feature selection.

Classifies each feature at a grid cell (lambda, pi) as stably selected
(selection proportion >= pi), stably excluded (<= 1 - pi) or unstable, and
scores the classification by minus its log-likelihood under a null where
every feature is selected with probability q/N per iteration. Maximizing the
score over the grid calibrates both parameters at once; an optional bound on
the expected number of false positives restricts the search to cells whose
error bound is below a budget eta.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import gammaln, logsumexp

from . import solvers
from .resampling import SelectionProportionArray

# feature categories at a (lambda, pi) cell
STABLE_OUT, UNSTABLE, STABLE_IN = -1, 0, 1
CATEGORY_NAMES = {STABLE_OUT: "stable-out", UNSTABLE: "unstable",
                  STABLE_IN: "stable-in"}

# pi values are canonicalized to rationals before threshold arithmetic so
# count comparisons never flip on float representation noise (e.g. the
# double nearest 0.9 is above 9/10, which would misplace ceil(K * pi)).
_PI_DENOMINATOR_LIMIT = 10**6


def _pi_fraction(pi: float) -> Fraction:
    if not 0.5 < pi < 1.0:
        raise ValueError(f"threshold pi must be in (0.5, 1), got {pi}")
    return Fraction(pi).limit_denominator(_PI_DENOMINATOR_LIMIT)


def category_thresholds(K: int, pi: float) -> tuple[int, int]:
    """Integer count thresholds (t_in, t_out) for the three categories.

    A feature with count c is stable-in iff c >= t_in (c/K >= pi), stable-out
    iff c <= t_out (c/K <= 1 - pi), unstable otherwise.
    """
    pr = _pi_fraction(pi)
    t_in = math.ceil(pr * K)
    t_out = math.floor((1 - pr) * K)
    return t_in, t_out


def classify_counts(counts, K: int, pi: float) -> np.ndarray:
    """Per-feature category codes at threshold pi."""
    counts = np.asarray(counts)
    t_in, t_out = category_thresholds(K, pi)
    out = np.full(counts.shape, UNSTABLE, dtype=np.int8)
    out[counts >= t_in] = STABLE_IN
    out[counts <= t_out] = STABLE_OUT
    return out


def binomial_logpmf_table(K: int, p: float) -> np.ndarray:
    """log P(Binomial(K, p) = k) for k = 0..K; requires 0 < p < 1."""
    k = np.arange(K + 1)
    return (gammaln(K + 1) - gammaln(k + 1) - gammaln(K - k + 1)
            + k * np.log(p) + (K - k) * np.log1p(-p))


def _category_logprobs(K: int, p: float, t_in: int, t_out: int,
                       table: np.ndarray | None = None):
    """(log P(stable-out), log P(unstable), log P(stable-in)) under the null."""
    if p == 0.0:
        return 0.0, -np.inf, -np.inf  # H identically 0, always stable-out
    if p == 1.0:
        return -np.inf, -np.inf, 0.0  # H identically K, always stable-in
    if table is None:
        table = binomial_logpmf_table(K, p)

    def tail(lo, hi):  # log P(lo <= H <= hi), summed from the actual masses
        if lo > hi:
            return -np.inf
        return min(float(logsumexp(table[lo:hi + 1])), 0.0)

    return tail(0, t_out), tail(t_out + 1, t_in - 1), tail(t_in, K)


def stability_score(counts, K: int, q_lambda: float, pi: float) -> float:
    """Minus the log-likelihood of the observed stability classification
    under uniform random selection of q_lambda features out of N.

    Returns -inf when a populated category has null probability exactly zero
    (degenerate cell). Finite scores are always >= 0.
    """
    counts = np.asarray(counts)
    N = counts.size
    if np.any(counts < 0) or np.any(counts > K):
        raise ValueError("counts must lie in [0, K]")
    if not 0.0 <= q_lambda <= N:
        raise ValueError(f"q_lambda must be in [0, N={N}], got {q_lambda}")
    t_in, t_out = category_thresholds(K, pi)
    n_in = int(np.count_nonzero(counts >= t_in))
    n_out = int(np.count_nonzero(counts <= t_out))
    n_mid = N - n_in - n_out
    lp_out, lp_mid, lp_in = _category_logprobs(K, q_lambda / N, t_in, t_out)
    score = 0.0
    for n_cat, lp in ((n_out, lp_out), (n_mid, lp_mid), (n_in, lp_in)):
        if n_cat == 0:
            continue
        if lp == -np.inf:
            return -np.inf
        score -= n_cat * lp
    return score


# ---------------------------------------------------------------------------
# error bounds


def pfer_mb(q: float, N: int, pi: float) -> float:
    """Expected-false-positives bound q^2 / ((2 pi - 1) N)."""
    if pi <= 0.5:
        raise ValueError("bound undefined for pi <= 0.5")
    if q < 0:
        raise ValueError("q must be nonnegative")
    if N < 1:
        raise ValueError("N must be at least 1")
    return q * q / ((2.0 * pi - 1.0) * N)


def pfer_ss(q: float, N: int, pi: float, K: int) -> float:
    """Complementary-pairs bound; piecewise in pi with K iterations.

    pi <= 0.75: q^2 / (2 (2 pi - 1 - 1/K) N); otherwise
    4 (1 - pi + 1/K) / (1 + 2/K) * q^2 / N.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    if q < 0:
        raise ValueError("q must be nonnegative")
    if N < 1:
        raise ValueError("N must be at least 1")
    if pi <= 0.5 + 1.0 / (2 * K):
        raise ValueError(
            f"bound undefined for pi <= 0.5 + 1/(2K) = {0.5 + 1.0 / (2 * K)}"
        )
    if pi <= 0.75:
        return q * q / (2.0 * (2.0 * pi - 1.0 - 1.0 / K) * N)
    return 4.0 * (1.0 - pi + 1.0 / K) / (1.0 + 2.0 / K) * q * q / N


PFER_METHODS = ("MB", "SS")


def pfer_bound(method: str, q: float, N: int, pi: float, K: int) -> float:
    if method == "MB":
        return pfer_mb(q, N, pi)
    if method == "SS":
        return pfer_ss(q, N, pi, K)
    raise ValueError(f"pfer method must be one of {PFER_METHODS}")


# ---------------------------------------------------------------------------
# grids


def build_pi_grid(M: int) -> np.ndarray:
    """M equally spaced thresholds from 0.6 to 0.9 inclusive."""
    if M < 2:
        raise ValueError("need at least 2 threshold values")
    return np.linspace(0.6, 0.9, M)


def _bisect_lambda_min(density_at, lam_max: float, target: float,
                       floor_ratio: float, what: str) -> float:
    """Largest penalty whose full-data model density reaches the target.

    Walks down geometrically from lam_max until the target is reached (warm
    starts stay on a monotone path), then bisects the bracketing interval.
    """
    floor = floor_ratio * lam_max
    hi = lam_max
    lo = lam_max / 2.0
    while density_at(lo) < target:
        hi = lo
        lo /= 2.0
        if lo < floor:
            if density_at(floor) >= target:
                lo = floor
                break
            warnings.warn(
                f"{what}: model density never reaches {target:.0%} down to "
                f"the penalty floor {floor:g}; using the floor",
                stacklevel=3,
            )
            return floor
    # density(lo) >= target > density(hi)
    while hi / lo > 1.01:
        mid = math.sqrt(lo * hi)
        if density_at(mid) >= target:
            lo = mid
        else:
            hi = mid
    return lo


def build_lambda_grid_lasso(X, y, L: int, target_density: float = 0.5,
                            floor_ratio: float = 1e-3, **options) -> np.ndarray:
    """Log-spaced penalty grid from the empty model down to >= 50% of
    features selected on the full data (bisection, floored)."""
    if L < 2:
        raise ValueError("need at least 2 grid values")
    X = solvers._as_design(X)
    lam_max = solvers.lasso_lambda_max(X, y)
    if lam_max <= 0:
        raise ValueError("lambda_max is zero; outcome carries no signal")

    def density_at(lam):
        fit = solvers.fit_lasso(X, y, lam, **options)
        return np.count_nonzero(fit.coefficients) / X.p

    lam_min = _bisect_lambda_min(density_at, lam_max, target_density,
                                 floor_ratio, "lasso grid")
    return np.geomspace(lam_max, lam_min, L)


def build_lambda_grid_glasso(S, L: int, target_density: float = 0.5,
                             floor_ratio: float = 1e-3,
                             tol: float = 1e-4) -> np.ndarray:
    """Log-spaced penalty grid from the empty graph down to >= 50% edge
    density on the full data (bisection, floored)."""
    if L < 2:
        raise ValueError("need at least 2 grid values")
    Sv = solvers._as_cov(S)
    p = Sv.shape[0]
    n_pairs = p * (p - 1) // 2
    lam_max = solvers.glasso_lambda_max(Sv)
    if lam_max <= 0:
        raise ValueError("lambda_max is zero; no off-diagonal dependence")
    state = solvers.GlassoState(Sv)

    def density_at(lam):
        est = solvers.fit_glasso(Sv, lam, tol=tol, state=state)
        return est.edge_count / n_pairs

    lam_min = _bisect_lambda_min(density_at, lam_max, target_density,
                                 floor_ratio, "graphical lasso grid")
    return np.geomspace(lam_max, lam_min, L)


@dataclass
class CalibrationGrid:
    """The (lambda, pi) search grid plus the observed model sizes q.

    q is monotone-regularized (running maximum along decreasing lambda) so
    the error bounds inherit the theoretical monotonicity of model size.
    """

    lambdas: np.ndarray
    pis: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=np.float64)
        self.pis = np.asarray(self.pis, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        if len(self.lambdas) > 1 and not np.all(np.diff(self.lambdas) < 0):
            raise ValueError("lambda grid must be strictly descending")
        if np.any(self.pis <= 0.5) or np.any(self.pis >= 1.0):
            raise ValueError("pi grid must lie in (0.5, 1)")
        if len(self.pis) > 1 and not np.all(np.diff(self.pis) > 0):
            raise ValueError("pi grid must be strictly increasing")
        if self.q.shape != self.lambdas.shape:
            raise ValueError("q must align with the lambda grid")
        if np.any(np.diff(self.q) < 0):
            raise ValueError("q must be non-decreasing along the grid "
                             "(monotone-regularize the raw values first)")

    @classmethod
    def from_proportions(cls, props: SelectionProportionArray,
                         pis) -> "CalibrationGrid":
        return cls(props.lambdas, np.asarray(pis, dtype=np.float64),
                   np.maximum.accumulate(props.q))


# ---------------------------------------------------------------------------
# score surface and calibration


@dataclass
class StabilityScoreSurface:
    score: np.ndarray     # (L, M), finite or -inf
    pfer: np.ndarray      # (L, M)
    feasible: np.ndarray  # (L, M) bool
    pfer_method: str = "MB"
    eta: float = np.inf


def score_surface(props: SelectionProportionArray, grid: CalibrationGrid,
                  pfer_method: str = "MB",
                  eta: float | None = None) -> StabilityScoreSurface:
    """Score and error bound for every (lambda, pi) cell."""
    if props.counts.shape[0] != len(grid.lambdas):
        raise ValueError("proportions and grid have different lambda counts")
    L, N = props.counts.shape
    M = len(grid.pis)
    K = props.K_effective
    eta_val = np.inf if eta is None else float(eta)

    thresholds = [category_thresholds(K, pi) for pi in grid.pis]
    t_in = np.array([t[0] for t in thresholds])
    t_out = np.array([t[1] for t in thresholds])

    score = np.empty((L, M))
    pfer = np.empty((L, M))
    for l in range(L):
        counts_l = props.counts[l]
        n_in = (counts_l[:, None] >= t_in[None, :]).sum(axis=0)
        n_out = (counts_l[:, None] <= t_out[None, :]).sum(axis=0)
        n_mid = N - n_in - n_out
        p_null = grid.q[l] / N
        table = (binomial_logpmf_table(K, p_null)
                 if 0.0 < p_null < 1.0 else None)
        for m in range(M):
            lp_out, lp_mid, lp_in = _category_logprobs(
                K, p_null, t_in[m], t_out[m], table
            )
            val = 0.0
            for n_cat, lp in ((n_out[m], lp_out), (n_mid[m], lp_mid),
                              (n_in[m], lp_in)):
                if n_cat == 0:
                    continue
                if lp == -np.inf:
                    val = -np.inf
                    break
                val -= n_cat * lp
            score[l, m] = val
            try:
                pfer[l, m] = pfer_bound(pfer_method, grid.q[l], N,
                                        grid.pis[m], K)
            except ValueError:
                pfer[l, m] = np.inf  # bound undefined at this pi: unusable
    feasible = pfer <= eta_val
    return StabilityScoreSurface(score, pfer, feasible, pfer_method, eta_val)


@dataclass
class CalibrationResult:
    lambda_hat: float
    pi_hat: float
    score: float
    pfer_bound: float
    selected: np.ndarray      # feature indices
    proportions: np.ndarray   # (N,)
    categories: np.ndarray    # (N,) int8 codes
    lambda_index: int
    pi_index: int

    @property
    def n_selected(self) -> int:
        return len(self.selected)


def calibrate(surface: StabilityScoreSurface, grid: CalibrationGrid,
              props: SelectionProportionArray) -> CalibrationResult:
    """Argmax of the score over feasible cells; ties prefer the larger
    penalty (sparser model), then the larger threshold (stricter)."""
    usable = surface.feasible & np.isfinite(surface.score)
    if not usable.any():
        raise ValueError(
            "no feasible grid cell with a finite stability score; raise the "
            "error budget (eta) or extend the penalty grid"
        )
    masked = np.where(usable, surface.score, -np.inf)
    best = masked.max()
    ls, ms = np.nonzero(masked == best)
    l_hat = int(ls.min())                 # smallest index = largest lambda
    m_hat = int(ms[ls == l_hat].max())    # largest pi among those
    counts = props.counts[l_hat]
    K = props.K_effective
    t_in, _ = category_thresholds(K, grid.pis[m_hat])
    selected = np.flatnonzero(counts >= t_in)
    return CalibrationResult(
        lambda_hat=float(grid.lambdas[l_hat]),
        pi_hat=float(grid.pis[m_hat]),
        score=float(surface.score[l_hat, m_hat]),
        pfer_bound=float(surface.pfer[l_hat, m_hat]),
        selected=selected,
        proportions=counts / K,
        categories=classify_counts(counts, K, grid.pis[m_hat]),
        lambda_index=l_hat,
        pi_index=m_hat,
    )


# ---------------------------------------------------------------------------
# information-criterion comparators


@dataclass
class InformationCriteriaResult:
    lambdas: np.ndarray
    log_likelihood: np.ndarray
    edge_counts: np.ndarray
    aic: np.ndarray
    bic: np.ndarray
    ebic: np.ndarray
    gamma: float
    supports: np.ndarray  # (L, n_edges) uint8 along the path
    best_index: dict = field(default_factory=dict)
    best_support: dict = field(default_factory=dict)  # edge vectors

    def ebic_curve(self, gamma: float) -> np.ndarray:
        p = _p_from_edges(self.supports.shape[1])
        return self.bic + 4.0 * gamma * np.log(p) * self.edge_counts

    def ebic_support(self, gamma: float) -> np.ndarray:
        return self.supports[int(np.nanargmin(self.ebic_curve(gamma)))]


def _p_from_edges(n_edge: int) -> int:
    return int(round((1 + math.sqrt(1 + 8 * n_edge)) / 2))


def information_criteria(S, lambdas, n: int, gamma: float = 0.5,
                         tol: float = 1e-4) -> InformationCriteriaResult:
    """AIC / BIC / EBIC curves along a graphical lasso path.

    Gaussian log-likelihood ll = (n/2) (log det(O) - tr(O S)); AIC adds
    2 |E|, BIC log(n) |E| and EBIC additionally 4 gamma log(p) |E|, with |E|
    the number of selected edges. Returns the curves and the argmin per
    criterion.
    """
    Sv = solvers._as_cov(S)
    p = Sv.shape[0]
    lambdas = np.asarray(lambdas, dtype=np.float64)
    L = len(lambdas)
    ll = np.full(L, np.nan)
    edges = np.zeros(L, dtype=np.int64)
    supports = np.zeros((L, p * (p - 1) // 2), dtype=np.uint8)
    state = solvers.GlassoState(Sv)
    iu = np.triu_indices(p, k=1)
    for i, lam in enumerate(lambdas):
        est = solvers.fit_glasso(Sv, float(lam), tol=tol, state=state)
        sign, logdet = np.linalg.slogdet(est.omega)
        if sign <= 0:
            continue  # non-PD estimate: cell stays invalid (nan)
        ll[i] = 0.5 * n * (logdet - float(np.sum(est.omega * Sv)))
        edges[i] = est.edge_count
        supports[i] = est.support[iu]
    aic = -2.0 * ll + 2.0 * edges
    bic = -2.0 * ll + np.log(n) * edges
    ebic = bic + 4.0 * gamma * np.log(p) * edges
    result = InformationCriteriaResult(lambdas, ll, edges, aic, bic, ebic,
                                       gamma, supports)
    for name, curve in (("aic", aic), ("bic", bic), ("ebic", ebic)):
        if np.all(np.isnan(curve)):
            raise RuntimeError("no valid precision estimate along the path")
        idx = int(np.nanargmin(curve))
        result.best_index[name] = idx
        result.best_support[name] = supports[idx]
    return result


# ---------------------------------------------------------------------------
# export


def surface_rows(grid: CalibrationGrid, surface: StabilityScoreSurface,
                 block=None):
    """Yield TSV rows (as tuples) for the surface export."""
    for l, lam in enumerate(grid.lambdas):
        for m, pi in enumerate(grid.pis):
            row = (lam, grid.q[l], pi, surface.score[l, m],
                   surface.pfer[l, m], bool(surface.feasible[l, m]))
            yield row if block is None else (block,) + row


def write_surface_tsv(path, grid: CalibrationGrid,
                      surface: StabilityScoreSurface, block=None):
    header = ["lambda", "q", "pi", "score", "pfer", "feasible"]
    if block is not None:
        header = ["block"] + header
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in surface_rows(grid, surface, block):
            fh.write("\t".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)
