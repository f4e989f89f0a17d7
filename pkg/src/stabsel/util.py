"""Shared low-level helpers: seeding, standardization, edge indexing."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def mix_seed(master_seed: int, k: int) -> int:
    """Derive an independent 64-bit stream seed from (master_seed, k).

    splitmix64 finalizer; statistically independent outputs for distinct k,
    so iterations can run in any order or in parallel.
    """
    z = (master_seed + k * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def rng_for(master_seed: int, k: int) -> np.random.Generator:
    """Deterministic per-iteration generator, independent across k."""
    return np.random.default_rng(mix_seed(master_seed, k))


def standardize_columns(X: np.ndarray):
    """Center and scale columns to zero mean / unit variance (divisor n).

    Returns (Xs, means, sds, constant_mask); constant columns (max == min)
    are left as zero columns and flagged in the mask.
    """
    X = np.asarray(X, dtype=np.float64)
    means = X.mean(axis=0)
    centered = X - means
    sds = np.sqrt(np.mean(centered**2, axis=0))
    constant = (X.max(axis=0) - X.min(axis=0)) == 0.0
    safe = np.where(constant, 1.0, sds)
    Xs = centered / safe
    Xs[:, constant] = 0.0
    return Xs, means, sds, constant


def correlation_matrix(X: np.ndarray) -> np.ndarray:
    """Empirical correlation (divisor n), without the PSD validation of the
    public covariance type; raises on constant columns."""
    Xs, _, _, constant = standardize_columns(X)
    if constant.any():
        j = int(np.flatnonzero(constant)[0])
        raise ValueError(f"column {j} is constant; correlation undefined")
    n = X.shape[0]
    S = (Xs.T @ Xs) / n
    S = (S + S.T) / 2.0
    np.fill_diagonal(S, 1.0)
    return S


def n_edges(p: int) -> int:
    return p * (p - 1) // 2


def edge_endpoints(p: int):
    """(i, j) arrays for the canonical edge order: upper triangle, row-major."""
    return np.triu_indices(p, k=1)


def edge_index(i: int, j: int, p: int) -> int:
    """Condensed index of edge (i, j), i < j, in canonical order."""
    if not 0 <= i < j < p:
        raise ValueError(f"need 0 <= i < j < p, got ({i}, {j}) with p={p}")
    return i * p - i * (i + 1) // 2 + (j - i - 1)


def support_to_edge_vector(support: np.ndarray) -> np.ndarray:
    """Flatten a symmetric p x p support matrix to the canonical edge vector."""
    iu, ju = edge_endpoints(support.shape[0])
    return support[iu, ju]


def edge_vector_to_support(edges: np.ndarray, p: int) -> np.ndarray:
    """Inverse of support_to_edge_vector; returns a symmetric 0/1 matrix."""
    out = np.zeros((p, p), dtype=edges.dtype)
    iu, ju = edge_endpoints(p)
    out[iu, ju] = edges
    out[ju, iu] = edges
    return out
