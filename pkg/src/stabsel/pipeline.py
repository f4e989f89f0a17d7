"""End-to-end single-block stability selection runs.

These glue the resampling engine to the solvers and the score calibration:
build a penalty grid on the full data, compute resampled selection
proportions, score the (lambda, pi) surface and return the calibrated model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import solvers
from .resampling import ResamplingPlan, SelectionProportionArray, \
    selection_proportions
from .stability import (CalibrationGrid, CalibrationResult,
                        StabilityScoreSurface, build_lambda_grid_glasso,
                        build_lambda_grid_lasso, build_pi_grid, calibrate,
                        score_surface)
from .util import correlation_matrix


def scalar_penalty_stack(lambdas, p: int) -> list[np.ndarray]:
    return [solvers._as_penalty(float(lam), p) for lam in lambdas]


def glasso_stack_selector(stack, tol: float = 1e-4):
    """Selector fitting a warm-started graphical lasso path per subsample."""
    def select(subset, lambdas):
        S = correlation_matrix(np.asarray(subset, dtype=np.float64))
        return solvers.glasso_path_supports(S, stack, tol=tol)
    return select


def lasso_path_selector(n_full: int | None = None, **options):
    """Selector fitting a warm-started lasso path per (X, y) subsample.

    The residual-sum-of-squares objective makes the penalty scale with the
    sample size, so grid values built on the full n observations are scaled
    by m/n before fitting a subsample of size m; per-observation shrinkage
    then matches across resamples.
    """
    def select(subset, lambdas):
        Xsub, ysub = subset
        lams = np.asarray(lambdas, dtype=np.float64)
        if n_full is not None:
            lams = lams * (len(ysub) / n_full)
        fits = solvers.lasso_path(Xsub, ysub, lams, **options)
        return np.array([fit.coefficients != 0.0 for fit in fits])
    return select


@dataclass
class StabilityRun:
    """Everything a calibrated single-block run produced."""

    result: CalibrationResult
    grid: CalibrationGrid
    surface: StabilityScoreSurface
    props: SelectionProportionArray
    kind: str                      # "variable" or "edge"
    feature_names: list

    def selected_names(self) -> list:
        return [self.feature_names[j] for j in self.result.selected]


def calibrate_glasso(X, lambdas=None, L: int = 50, pis=None,
                     plan: ResamplingPlan | None = None,
                     pfer_method: str = "MB", eta: float | None = None,
                     tol: float = 1e-4, n_jobs: int = 1) -> StabilityRun:
    """Stability-selection graphical lasso with score calibration."""
    X = solvers._as_design(X)
    plan = plan or ResamplingPlan()
    pis = build_pi_grid(31) if pis is None else np.asarray(pis, float)
    if lambdas is None:
        S = solvers.empirical_covariance(X)
        lambdas = build_lambda_grid_glasso(S, L, tol=tol)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    stack = scalar_penalty_stack(lambdas, X.p)
    props = selection_proportions(
        X.values, lambdas, plan, glasso_stack_selector(stack, tol),
        kind="edge", n_jobs=n_jobs,
    )
    grid = CalibrationGrid.from_proportions(props, pis)
    surface = score_surface(props, grid, pfer_method, eta)
    result = calibrate(surface, grid, props)
    iu, ju = np.triu_indices(X.p, k=1)
    edge_names = [(X.feature_names[i], X.feature_names[j])
                  for i, j in zip(iu, ju)]
    return StabilityRun(result, grid, surface, props, "edge", edge_names)


def calibrate_lasso(X, y, lambdas=None, L: int = 50, pis=None,
                    plan: ResamplingPlan | None = None,
                    pfer_method: str = "MB", eta: float | None = None,
                    n_jobs: int = 1, **solver_options) -> StabilityRun:
    """Stability-selection lasso regression with score calibration."""
    X = solvers._as_design(X)
    y = np.asarray(y, dtype=np.float64)
    plan = plan or ResamplingPlan()
    pis = build_pi_grid(31) if pis is None else np.asarray(pis, float)
    if lambdas is None:
        lambdas = build_lambda_grid_lasso(X, y, L, **solver_options)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    props = selection_proportions(
        (X.values, y), lambdas, plan,
        lasso_path_selector(n_full=X.n, **solver_options),
        kind="variable", n_jobs=n_jobs,
    )
    grid = CalibrationGrid.from_proportions(props, pis)
    surface = score_surface(props, grid, pfer_method, eta)
    result = calibrate(surface, grid, props)
    return StabilityRun(result, grid, surface, props, "variable",
                        list(X.feature_names))


def error_control_lambda(props: SelectionProportionArray,
                         grid: CalibrationGrid, pi: float, eta: float,
                         pfer_method: str = "MB"):
    """Classical calibration at a fixed threshold: the weakest penalty whose
    error bound still respects the budget. Returns (lambda_index, selected
    feature indices) or None when even the strongest penalty violates it."""
    from .stability import category_thresholds, pfer_bound

    N = props.counts.shape[1]
    K = props.K_effective
    best = None
    for l in range(len(grid.lambdas)):
        try:
            bound = pfer_bound(pfer_method, grid.q[l], N, pi, K)
        except ValueError:
            continue
        if bound <= eta:
            best = l
    if best is None:
        return None
    t_in, _ = category_thresholds(K, pi)
    return best, np.flatnonzero(props.counts[best] >= t_in)
