"""Seedable resampling plans and selection-proportion computation.

Every iteration k draws its indices from an independent stream seeded by
mix_seed(master_seed, k), so iterations can be evaluated in any order or in
parallel with bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .util import rng_for

SCHEMES = ("subsample", "complementary_pairs", "bootstrap")


@dataclass
class ResamplingPlan:
    """How to draw the K resampled datasets.

    For complementary pairs, K counts pairs by default (one iteration = one
    50/50 split, a feature counts as selected when chosen on both halves).
    Set cpss_unit="half_fits" to interpret K as the number of half-model
    fits instead (K/2 pairs), for sensitivity checks.
    """

    scheme: str = "complementary_pairs"
    K: int = 100
    master_seed: int = 0
    tau: float = 0.5
    cpss_unit: str = "pairs"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.scheme == "subsample" and not 0.0 < self.tau < 1.0:
            raise ValueError("subsample fraction tau must be in (0, 1)")
        if self.cpss_unit not in ("pairs", "half_fits"):
            raise ValueError("cpss_unit must be 'pairs' or 'half_fits'")
        if (self.scheme == "complementary_pairs"
                and self.cpss_unit == "half_fits" and self.K % 2):
            raise ValueError("K must be even when cpss_unit='half_fits'")

    @property
    def iterations(self) -> int:
        """Number of resampling iterations (pairs for CPSS)."""
        if self.scheme == "complementary_pairs" and self.cpss_unit == "half_fits":
            return self.K // 2
        return self.K


def draw_indices(plan: ResamplingPlan, k: int, n: int):
    """Observation indices for iteration k (1-based).

    Returns a tuple of index arrays: one array for subsample/bootstrap, the
    two disjoint halves for complementary pairs. Deterministic function of
    (plan.master_seed, k) only.
    """
    if not 1 <= k <= plan.iterations:
        raise ValueError(f"iteration k must be in 1..{plan.iterations}")
    if n < 4:
        raise ValueError("need at least 4 observations to resample")
    rng = rng_for(plan.master_seed, k)
    if plan.scheme == "subsample":
        m = int(np.floor(plan.tau * n))
        if m < 2:
            raise ValueError(
                f"subsample size floor(tau*n)={m} too small (need >= 2)"
            )
        return (np.sort(rng.choice(n, size=m, replace=False)),)
    if plan.scheme == "complementary_pairs":
        perm = rng.permutation(n)
        half = n // 2
        return (np.sort(perm[:half]), np.sort(perm[half:]))
    return (np.sort(rng.integers(0, n, size=n)),)


@dataclass
class SelectionProportionArray:
    """Per-(penalty, feature) selection counts over a resampling run."""

    counts: np.ndarray          # (L, N) int32
    K_effective: int
    lambdas: np.ndarray         # (L,)
    q: np.ndarray               # (L,) mean features selected per fitted model
    kind: str = "variable"      # or "edge"
    group_q: np.ndarray | None = None  # (L, n_groups) when groups were given

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.K_effective


def _subset(data, idx):
    if isinstance(data, tuple):
        return tuple(np.asarray(part)[idx] for part in data)
    return np.asarray(data)[idx]


def _data_length(data) -> int:
    first = data[0] if isinstance(data, tuple) else data
    return np.asarray(first).shape[0]


def _run_iteration(data, lambdas, plan, selector, k, groups):
    parts = draw_indices(plan, k, _data_length(data))
    sels = []
    for part in parts:
        try:
            sel = np.asarray(selector(_subset(data, part), lambdas))
        except Exception as exc:
            raise RuntimeError(
                f"selector failed on resampling iteration k={k} "
                f"(lambda grid of {len(lambdas)})"
            ) from exc
        if sel.ndim != 2 or sel.shape[0] != len(lambdas):
            raise RuntimeError(
                f"selector returned shape {sel.shape} for {len(lambdas)} "
                f"penalty values on iteration k={k}"
            )
        sels.append(sel.astype(bool))
    if plan.scheme == "complementary_pairs":
        counts_k = (sels[0] & sels[1]).astype(np.int32)
    else:
        counts_k = sels[0].astype(np.int32)
    if groups is None:
        sel_sum = sum(sel.sum(axis=1, dtype=np.int64) for sel in sels)
        sel_sum = sel_sum[:, None]
    else:
        n_groups = int(groups.max()) + 1
        sel_sum = np.zeros((len(lambdas), n_groups), dtype=np.int64)
        for sel in sels:
            for g in range(n_groups):
                sel_sum[:, g] += sel[:, groups == g].sum(axis=1)
    return counts_k, sel_sum, len(sels)


def selection_proportions(data, lambdas, plan: ResamplingPlan, selector,
                          kind: str = "variable", feature_groups=None,
                          n_jobs: int = 1) -> SelectionProportionArray:
    """Resampled selection counts across a penalty grid.

    selector(subset, lambdas) must return an (L, N) 0/1 array of selection
    indicators, with subset a row-subset of data (element-wise for tuples).
    For complementary pairs a feature counts once per iteration when selected
    on both halves; q is still averaged over the individual fitted models
    (2K half-fits), which is what the error bounds consume.

    feature_groups (optional, length N) additionally records the per-group
    mean selected count in group_q. Aggregation is order-independent integer
    addition, so any n_jobs gives identical output.
    """
    lambdas = np.asarray(lambdas, dtype=np.float64)
    K = plan.iterations
    groups = None if feature_groups is None else np.asarray(feature_groups)

    if n_jobs == 1:
        results = [_run_iteration(data, lambdas, plan, selector, k, groups)
                   for k in range(1, K + 1)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_iteration)(data, lambdas, plan, selector, k, groups)
            for k in range(1, K + 1)
        )

    counts = np.zeros_like(results[0][0])
    sel_sum = np.zeros_like(results[0][1])
    fits_per_iter = results[0][2]
    for counts_k, sel_sum_k, _ in results:
        counts += counts_k
        sel_sum += sel_sum_k

    q_groups = sel_sum / (K * fits_per_iter)
    q = q_groups.sum(axis=1)
    return SelectionProportionArray(
        counts=counts,
        K_effective=K,
        lambdas=lambdas,
        q=q,
        kind=kind,
        group_q=q_groups if feature_groups is not None else None,
    )
