import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import hadamard

from stabsel.solvers import (CovarianceMatrix, DesignMatrix, PenaltyMatrix,
                             check_kkt_glasso, check_kkt_lasso,
                             empirical_covariance, fit_glasso, fit_lasso,
                             glasso_lambda_max, lasso_lambda_max, lasso_path)


def _random_regression(rng, n, p, k_signal=3):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[rng.choice(p, size=min(k_signal, p), replace=False)] = \
        rng.uniform(-2, 2, min(k_signal, p))
    y = X @ beta + rng.standard_normal(n)
    return X, y


def _random_correlation(rng, p, n_extra=20):
    A = rng.standard_normal((p + n_extra, p))
    return empirical_covariance(DesignMatrix.from_array(A)).values


# ---------------------------------------------------------------------------
# lasso


def test_lasso_full_shrinkage_at_lambda_max():
    rng = np.random.default_rng(0)
    X, y = _random_regression(rng, 40, 12)
    lam_max = lasso_lambda_max(X, y)
    for lam in (lam_max, 1.7 * lam_max):
        fit = fit_lasso(X, y, lam)
        assert np.all(fit.coefficients == 0.0)
        assert fit.intercept == pytest.approx(y.mean())


def test_lasso_univariate_soft_threshold():
    # closed form: standardized x, b_std = soft(x'yc, lam/2) / n
    rng = np.random.default_rng(1)
    n = 100
    x = rng.standard_normal(n)
    y = 1.3 * x + rng.standard_normal(n) * 0.5
    xs = (x - x.mean()) / np.sqrt(np.mean((x - x.mean()) ** 2))
    yc = y - y.mean()
    rho = xs @ yc
    for lam in (0.1 * abs(rho), abs(rho), 2.5 * abs(rho)):
        want_std = np.sign(rho) * max(abs(rho) - lam / 2.0, 0.0) / n
        want = want_std / np.sqrt(np.mean((x - x.mean()) ** 2))
        fit = fit_lasso(x[:, None], y, lam)
        assert fit.coefficients[0] == pytest.approx(want, abs=1e-10)


def test_lasso_kkt_random_instance():
    rng = np.random.default_rng(2)
    X, y = _random_regression(rng, 50, 20)
    lam = 0.1 * lasso_lambda_max(X, y)
    fit = fit_lasso(X, y, lam)
    assert fit.converged
    assert check_kkt_lasso(X, y, fit, tol=1e-6).passed


def test_lasso_kkt_perturbation_fails():
    rng = np.random.default_rng(3)
    X, y = _random_regression(rng, 50, 10)
    lam = 0.2 * lasso_lambda_max(X, y)
    fit = fit_lasso(X, y, lam)
    fit.coefficients[0] += 0.1
    rep = check_kkt_lasso(X, y, fit, tol=1e-6)
    assert not rep.passed and rep.max_residual > 1e-6


def test_lasso_constant_column_dropped_with_warning():
    rng = np.random.default_rng(4)
    X, y = _random_regression(rng, 30, 5)
    X[:, 2] = 7.0
    with pytest.warns(UserWarning, match="constant columns"):
        fit = fit_lasso(X, y, 0.5 * lasso_lambda_max(X, y))
    assert fit.coefficients[2] == 0.0


def test_lasso_rejects_bad_input():
    rng = np.random.default_rng(5)
    X, y = _random_regression(rng, 20, 4)
    with pytest.raises(ValueError):
        fit_lasso(X, y, -1.0)
    y_bad = y.copy()
    y_bad[0] = np.nan
    with pytest.raises(ValueError):
        fit_lasso(X, y_bad, 1.0)
    X_bad = X.copy()
    X_bad[0, 0] = np.inf
    with pytest.raises(ValueError):
        fit_lasso(X_bad, y, 1.0)


def test_lasso_path_matches_cold_start():
    rng = np.random.default_rng(6)
    X, y = _random_regression(rng, 60, 15)
    lam_max = lasso_lambda_max(X, y)
    grid = np.geomspace(lam_max, 0.01 * lam_max, 12)
    fits = lasso_path(X, y, grid)
    for lam, fit in zip(grid, fits):
        cold = fit_lasso(X, y, lam)
        assert np.allclose(fit.coefficients, cold.coefficients, atol=1e-5)
        assert check_kkt_lasso(X, y, fit, tol=1e-6).passed


def test_lasso_path_single_lambda_max_grid():
    rng = np.random.default_rng(7)
    X, y = _random_regression(rng, 30, 6)
    fits = lasso_path(X, y, [lasso_lambda_max(X, y)])
    assert len(fits) == 1 and np.all(fits[0].coefficients == 0.0)


def test_lasso_path_monotone_on_orthogonal_design():
    # Hadamard columns: exactly orthogonal, zero mean, +-1 entries;
    # soft-thresholding is exact so active sets nest along the grid.
    H = hadamard(64).astype(float)
    X = H[:, 1:9]
    rng = np.random.default_rng(8)
    y = X @ rng.uniform(-1, 1, 8) + rng.standard_normal(64) * 0.3
    lam_max = lasso_lambda_max(X, y)
    grid = np.geomspace(lam_max, 1e-3 * lam_max, 50)
    nnz = [np.count_nonzero(f.coefficients) for f in lasso_path(X, y, grid)]
    assert all(a <= b for a, b in zip(nnz, nnz[1:]))


def test_lasso_path_requires_descending_grid():
    rng = np.random.default_rng(9)
    X, y = _random_regression(rng, 20, 4)
    with pytest.raises(ValueError, match="descending"):
        lasso_path(X, y, [1.0, 2.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_lasso_kkt_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 201))
    p = int(rng.integers(2, 51))
    X, y = _random_regression(rng, n, p)
    lam = float(rng.uniform(0.05, 0.95)) * lasso_lambda_max(X, y)
    fit = fit_lasso(X, y, lam)
    assert fit.converged
    assert check_kkt_lasso(X, y, fit, tol=1e-6).passed


# ---------------------------------------------------------------------------
# empirical covariance


def test_covariance_identical_columns():
    rng = np.random.default_rng(10)
    x = rng.standard_normal(50)
    X = np.column_stack([x, x, rng.standard_normal(50)])
    S = empirical_covariance(DesignMatrix.from_array(X)).values
    assert S[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_covariance_orthogonal_columns_identity():
    H = hadamard(32).astype(float)
    S = empirical_covariance(DesignMatrix.from_array(H[:, 1:6])).values
    assert np.allclose(S, np.eye(5), atol=1e-12)


def test_covariance_matches_two_pass_oracle():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((200, 5)) * rng.uniform(0.5, 3.0, 5) + \
        rng.uniform(-2, 2, 5)
    S = empirical_covariance(DesignMatrix.from_array(X)).values
    # independent two-pass computation
    mu = X.mean(axis=0)
    C = (X - mu).T @ (X - mu) / X.shape[0]
    d = np.sqrt(np.diag(C))
    want = C / np.outer(d, d)
    assert np.abs(S - want).max() < 1e-12


def test_covariance_constant_column_error_names_column():
    X = np.column_stack([np.ones(20), np.arange(20.0)])
    with pytest.raises(ValueError, match="v1"):
        empirical_covariance(DesignMatrix.from_array(X))


# ---------------------------------------------------------------------------
# graphical lasso


def test_glasso_zero_penalty_inverts():
    rng = np.random.default_rng(12)
    S = _random_correlation(rng, 8, n_extra=200)
    est = fit_glasso(S, 0.0)
    assert np.abs(est.omega - np.linalg.inv(S)).max() < 1e-4


def test_glasso_screening_gives_empty_graph():
    rng = np.random.default_rng(13)
    S = _random_correlation(rng, 10)
    lam_max = glasso_lambda_max(S)
    for lam in (lam_max, lam_max + 1e-6):
        est = fit_glasso(S, lam)
        assert est.edge_count == 0
        assert np.count_nonzero(est.omega - np.diag(np.diag(est.omega))) == 0
        assert check_kkt_glasso(S, lam, est, tol=1e-5).passed


def test_glasso_kkt_random_instance():
    rng = np.random.default_rng(14)
    S = _random_correlation(rng, 10)
    lam = 0.3 * glasso_lambda_max(S)
    est = fit_glasso(S, lam, tol=1e-9)
    assert est.converged
    assert check_kkt_glasso(S, lam, est, tol=1e-5).passed


def test_glasso_matrix_penalty_kkt():
    rng = np.random.default_rng(15)
    p = 12
    S = _random_correlation(rng, p)
    M = rng.uniform(0.05, 0.6, (p, p)) * glasso_lambda_max(S)
    M = (M + M.T) / 2.0
    np.fill_diagonal(M, 0.0)
    est = fit_glasso(S, PenaltyMatrix(M), tol=1e-9)
    assert check_kkt_glasso(S, PenaltyMatrix(M), est, tol=1e-5).passed
    assert np.array_equal(est.support, est.support.T)
    assert np.all(np.diag(est.support) == 0)


def test_glasso_kkt_perturbation_fails():
    rng = np.random.default_rng(16)
    S = _random_correlation(rng, 8)
    lam = 0.2 * glasso_lambda_max(S)
    est = fit_glasso(S, lam, tol=1e-9)
    nz = np.argwhere(np.triu(est.support, k=1) > 0)
    assert len(nz)  # needs at least one edge to perturb
    i, j = nz[0]
    est.omega[i, j] = est.omega[j, i] = 0.0
    est.support[i, j] = est.support[j, i] = 0
    assert not check_kkt_glasso(S, lam, est, tol=1e-5).passed


def test_glasso_positive_definite_and_converged():
    rng = np.random.default_rng(17)
    for _ in range(5):
        p = int(rng.integers(3, 20))
        S = _random_correlation(rng, p)
        est = fit_glasso(S, 0.4 * glasso_lambda_max(S))
        assert est.converged
        assert np.linalg.eigvalsh(est.omega)[0] > 0


def test_glasso_penalty_monotonicity():
    # edge count shrinks as the penalty grows, give or take one
    # support-tolerance boundary flip
    rng = np.random.default_rng(18)
    for _ in range(50):
        p = int(rng.integers(5, 15))
        S = _random_correlation(rng, p)
        lam_max = glasso_lambda_max(S)
        l1, l2 = sorted(rng.uniform(0.05, 0.95, 2) * lam_max)
        e1 = fit_glasso(S, l1).edge_count
        e2 = fit_glasso(S, l2).edge_count
        assert e1 >= e2 - 1


def test_glasso_zero_penalty_consistency_well_conditioned():
    rng = np.random.default_rng(19)
    S = _random_correlation(rng, 10, n_extra=500)
    assert np.linalg.cond(S) < 1e4
    est = fit_glasso(S, 0.0)
    assert np.abs(est.omega - np.linalg.inv(S)).max() < 1e-4


def test_glasso_lambda_max_cases():
    assert glasso_lambda_max(np.eye(4)) == 0.0
    S = np.eye(3)
    S[0, 1] = S[1, 0] = 0.3
    assert glasso_lambda_max(S) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        glasso_lambda_max(np.eye(1))
    rng = np.random.default_rng(20)
    Sr = _random_correlation(rng, 7)
    est = fit_glasso(Sr, glasso_lambda_max(Sr) + 1e-6)
    assert est.edge_count == 0


def test_glasso_rejects_non_psd():
    S = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues -1 and 3
    with pytest.raises(ValueError, match="positive semidefinite"):
        fit_glasso(S, 0.1)


def test_glasso_single_variable_rejected():
    with pytest.raises(ValueError):
        fit_glasso(np.array([[2.0]]), 0.1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_glasso_kkt_property(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 25))
    S = _random_correlation(rng, p, n_extra=int(rng.integers(5, 50)))
    lam_max = glasso_lambda_max(S)
    if lam_max == 0:
        return
    lam = float(rng.uniform(0.1, 0.9)) * lam_max
    est = fit_glasso(S, lam, tol=1e-9)
    assert check_kkt_glasso(S, lam, est, tol=1e-5).passed
    assert np.array_equal(est.support, est.support.T)


# ---------------------------------------------------------------------------
# domain types


def test_design_matrix_validation():
    with pytest.raises(ValueError, match="unique"):
        DesignMatrix(np.zeros((3, 2)) + np.arange(2), ["a", "a"])
    with pytest.raises(ValueError, match="observations"):
        DesignMatrix.from_array(np.zeros((1, 2)))
    with pytest.raises(ValueError, match="non-finite"):
        DesignMatrix.from_array(np.array([[1.0, np.nan], [2.0, 3.0]]))


def test_penalty_matrix_validation():
    with pytest.raises(ValueError, match="diagonal"):
        PenaltyMatrix(np.eye(3))
    with pytest.raises(ValueError, match="nonnegative"):
        PenaltyMatrix.constant(3, -0.5)
    asym = np.zeros((3, 3))
    asym[0, 1] = 0.2
    with pytest.raises(ValueError, match="symmetric"):
        PenaltyMatrix(asym)
    P = PenaltyMatrix.constant(4, 0.7)
    assert np.all(np.diag(P.values) == 0.0)
    off = P.values[~np.eye(4, dtype=bool)]
    assert np.all(off == 0.7)


def test_covariance_matrix_validation():
    with pytest.raises(ValueError, match="symmetric"):
        CovarianceMatrix(np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(ValueError, match="positive semidefinite"):
        CovarianceMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
