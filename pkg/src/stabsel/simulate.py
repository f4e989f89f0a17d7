"""Ground-truth data generation for the benchmark studies.

Graph datasets: draw a random (Erdos-Renyi) or scale-free (preferential
attachment, tree mode) adjacency, fill the precision off-diagonals with
random signs (scaled by v_b across groups), make the matrix positive
definite by diagonal dominance with a constant u chosen to maximize the
contrast of the implied correlation matrix, and sample centered multivariate
normal rows with covariance inv(precision).

Regression datasets: independent standard normal predictors, uniform effect
sizes on a signal subset, Gaussian noise scaled so the linear part explains
a target share of the outcome variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .multiblock import BlockStructure
from .util import mix_seed, n_edges

U_GRID = np.geomspace(1e-5, 10.0, 100)
MIN_SIGNAL_BETA = 0.05


@dataclass
class GraphSpec:
    topology: str = "erdos_renyi"  # or "scale_free"
    p: int = 100
    nu: float = 0.02
    seed: int | None = None

    def __post_init__(self):
        if self.topology not in ("erdos_renyi", "scale_free"):
            raise ValueError("topology must be 'erdos_renyi' or 'scale_free'")
        if self.p < 3:
            raise ValueError("need at least 3 nodes")
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError("density nu must be in [0, 1]")


def simulate_er_graph(p: int, nu: float, seed: int) -> np.ndarray:
    """Symmetric 0/1 adjacency; each pair is an edge with probability nu."""
    if p < 3:
        raise ValueError("need at least 3 nodes")
    if not 0.0 <= nu <= 1.0:
        raise ValueError("density nu must be in [0, 1]")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(p, k=1)
    edges = rng.random(len(iu[0])) < nu
    adj = np.zeros((p, p), dtype=np.int8)
    adj[iu[0][edges], iu[1][edges]] = 1
    return adj + adj.T


def simulate_ba_graph(p: int, seed: int) -> np.ndarray:
    """Preferential attachment in tree mode: each new node attaches one edge
    to an existing node chosen proportionally to its degree. Exactly p - 1
    edges, connected."""
    if p < 3:
        raise ValueError("need at least 3 nodes")
    rng = np.random.default_rng(seed)
    adj = np.zeros((p, p), dtype=np.int8)
    adj[0, 1] = adj[1, 0] = 1
    urn = [0, 1]  # one entry per unit of degree
    for new in range(2, p):
        target = urn[rng.integers(0, len(urn))]
        adj[new, target] = adj[target, new] = 1
        urn.extend((new, target))
    return adj


def fill_precision(theta: np.ndarray, blocks: BlockStructure | None = None,
                   v_b: float = 1.0, seed: int = 0) -> np.ndarray:
    """Off-diagonal precision entries: +-1 on within-group edges, +-v_b on
    cross-group edges, 0 off the adjacency. Diagonal left at zero."""
    if not 0.0 <= v_b <= 1.0:
        raise ValueError("v_b must be in [0, 1]")
    theta = np.asarray(theta)
    p = theta.shape[0]
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(p, k=1)
    on = theta[iu] > 0
    signs = np.where(rng.random(len(iu[0])) < 0.5, -1.0, 1.0)
    vals = np.where(on, signs, 0.0)
    if blocks is not None:
        g = blocks.variable_group
        cross = g[iu[0]] != g[iu[1]]
        vals = np.where(cross, vals * v_b, vals)
    omega = np.zeros((p, p))
    omega[iu] = vals
    return omega + omega.T


def _contrast(corr: np.ndarray) -> int:
    """Number of distinct |correlation| values truncated to 3 decimals on
    the strict upper triangle."""
    iu = np.triu_indices(corr.shape[0], k=1)
    truncated = np.floor(np.abs(corr[iu]) * 1000.0) / 1000.0
    return int(np.unique(truncated).size)


def _corr_from_precision(omega_off: np.ndarray, u: float) -> np.ndarray:
    omega = omega_off.copy()
    np.fill_diagonal(omega, np.abs(omega_off).sum(axis=1) + u)
    sigma = np.linalg.inv(omega)
    d = np.sqrt(np.diag(sigma))
    return sigma / np.outer(d, d)


def tune_u(omega_offdiag: np.ndarray, grid=U_GRID) -> float:
    """Diagonal-dominance constant maximizing correlation contrast.

    Scans the ascending grid, computes the correlation matrix implied by
    each candidate and keeps the first maximizer of the contrast.
    """
    best_u, best_c = None, -1
    for u in np.asarray(grid, dtype=np.float64):
        try:
            corr = _corr_from_precision(omega_offdiag, float(u))
        except np.linalg.LinAlgError:
            continue
        c = _contrast(corr)
        if c > best_c:
            best_u, best_c = float(u), c
    if best_u is None:
        raise RuntimeError("no candidate u produced an invertible precision")
    return best_u


def sample_mvn(sigma: np.ndarray, n: int, seed: int) -> np.ndarray:
    """n i.i.d. centered Gaussian rows with covariance sigma (Cholesky)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, sigma.shape[0])) @ L.T


@dataclass
class SimulatedGraphDataset:
    X: np.ndarray
    theta: np.ndarray       # true adjacency = support of omega
    omega: np.ndarray
    sigma: np.ndarray
    u_used: float
    spec: GraphSpec
    seed: int
    blocks: BlockStructure | None = None
    v_b: float = 1.0

    @property
    def true_edges(self) -> np.ndarray:
        iu = np.triu_indices(self.theta.shape[0], k=1)
        return np.flatnonzero(self.theta[iu] > 0)


def _stable_inverse(omega: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """inv(omega), Newton-refined until ||sigma omega - I||_max <= tol."""
    sigma = np.linalg.inv(omega)
    sigma = (sigma + sigma.T) / 2.0
    eye = np.eye(omega.shape[0])
    for _ in range(3):
        resid = np.abs(sigma @ omega - eye).max()
        if resid <= tol:
            break
        sigma = sigma @ (2.0 * eye - omega @ sigma)
        sigma = (sigma + sigma.T) / 2.0
    return sigma


def simulate_graph_dataset(spec: GraphSpec, n: int,
                           blocks: BlockStructure | None = None,
                           v_b: float = 1.0, seed: int = 0,
                           ) -> SimulatedGraphDataset:
    """Compose graph, precision, u-tuning and sampling into one dataset.

    Sub-stages draw from independent streams derived from seed, so datasets
    are reproducible and independent across seeds. With v_b < 1 the returned
    theta is the support actually present in the precision (cross-group
    edges vanish entirely at v_b = 0).
    """
    if n < 2:
        raise ValueError("need at least 2 observations")
    if blocks is not None and blocks.p != spec.p:
        raise ValueError("block structure does not match p")
    graph_seed = spec.seed if spec.seed is not None else mix_seed(seed, 1)
    if spec.topology == "erdos_renyi":
        adj = simulate_er_graph(spec.p, spec.nu, graph_seed)
    else:
        adj = simulate_ba_graph(spec.p, graph_seed)
    omega_off = fill_precision(adj, blocks, v_b, mix_seed(seed, 2))
    u = tune_u(omega_off)
    omega = omega_off.copy()
    np.fill_diagonal(omega, np.abs(omega_off).sum(axis=1) + u)
    sigma = _stable_inverse(omega)
    X = sample_mvn(sigma, n, mix_seed(seed, 3))
    theta = (omega_off != 0.0).astype(np.int8)
    return SimulatedGraphDataset(X, theta, omega, sigma, u, spec, seed,
                                 blocks, v_b)


@dataclass
class SimulatedRegressionDataset:
    X: np.ndarray
    y: np.ndarray
    beta_true: np.ndarray
    signal_set: np.ndarray
    sigma_noise: float
    seed: int


def simulate_regression(n: int, p: int, n_signal: int,
                        explained_variance: float = 0.6,
                        seed: int = 0) -> SimulatedRegressionDataset:
    """Independent N(0,1) predictors; uniform effects on a signal subset;
    noise variance set from the realized var(X beta) so the linear part
    explains the requested share of var(y)."""
    if not 1 <= n_signal <= p:
        raise ValueError("n_signal must be in 1..p")
    if not 0.0 < explained_variance < 1.0:
        raise ValueError("explained_variance must be in (0, 1)")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    signal = np.arange(n_signal)
    beta = np.zeros(p)
    draw = rng.uniform(-1.0, 1.0, size=n_signal)
    # effects below the floor would make TP/FN accounting meaningless
    while np.any(np.abs(draw) < MIN_SIGNAL_BETA):
        redo = np.abs(draw) < MIN_SIGNAL_BETA
        draw[redo] = rng.uniform(-1.0, 1.0, size=int(redo.sum()))
    beta[signal] = draw
    linear = X @ beta
    var_linear = float(np.var(linear))
    ev = explained_variance
    sigma_noise = float(np.sqrt(var_linear * (1.0 - ev) / ev))
    y = linear + sigma_noise * rng.standard_normal(n)
    return SimulatedRegressionDataset(X, y, beta, signal, sigma_noise, seed)
