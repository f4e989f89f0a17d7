"""Multi-block graphical stability selection.

Variables come in G a-priori known groups, partitioning the edge set into
B = G (G + 1) / 2 blocks (within-group blocks first, then between-group
blocks in lexicographic group order). Each block gets its own penalty and
threshold. Two calibration strategies:

* block-wise: calibrate one block at a time from fits where every other
  block is weakly penalized at lambda0, then take the union of the
  block-stable edge sets;
* joint multi-parameter: explore the full product grid of per-block
  penalties and maximize the sum of per-block scores.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import solvers, stability
from .resampling import ResamplingPlan, SelectionProportionArray, \
    selection_proportions
from .solvers import PenaltyMatrix
from .stability import CalibrationGrid, CalibrationResult, \
    StabilityScoreSurface, build_pi_grid, calibrate, pfer_bound, score_surface
from .pipeline import glasso_stack_selector, scalar_penalty_stack
from .util import edge_endpoints, n_edges


@dataclass
class BlockStructure:
    """Edge-set partition induced by ordered variable groups."""

    group_sizes: tuple
    variable_group: np.ndarray = field(init=False)  # (p,)
    pair_block: np.ndarray = field(init=False)      # (p, p), -1 diagonal
    edge_blocks: np.ndarray = field(init=False)     # (p(p-1)/2,)
    block_sizes: np.ndarray = field(init=False)     # (B,) edge counts

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.group_sizes)
        if any(s < 2 for s in sizes):
            raise ValueError("every group needs at least 2 variables")
        self.group_sizes = sizes
        G = len(sizes)
        p = sum(sizes)
        self.variable_group = np.repeat(np.arange(G), sizes)
        g = self.variable_group
        gi, gj = np.meshgrid(g, g, indexing="ij")
        lo, hi = np.minimum(gi, gj), np.maximum(gi, gj)
        same = lo == hi
        off_rank = lo * G - lo * (lo + 1) // 2 + (hi - lo - 1)
        self.pair_block = np.where(same, lo, G + off_rank)
        np.fill_diagonal(self.pair_block, -1)
        iu, ju = edge_endpoints(p)
        self.edge_blocks = self.pair_block[iu, ju]
        self.block_sizes = np.bincount(self.edge_blocks, minlength=self.B)
        assert self.block_sizes.sum() == n_edges(p)

    @property
    def G(self) -> int:
        return len(self.group_sizes)

    @property
    def p(self) -> int:
        return int(sum(self.group_sizes))

    @property
    def B(self) -> int:
        return self.G * (self.G + 1) // 2

    def block_edge_indices(self, b: int) -> np.ndarray:
        return np.flatnonzero(self.edge_blocks == b)


def make_block_structure(group_sizes) -> BlockStructure:
    return BlockStructure(tuple(group_sizes))


def assemble_penalty(blocks: BlockStructure, lambda_per_block) -> PenaltyMatrix:
    """Penalty matrix with entry (i, j) = lambda of the block of (i, j)."""
    lams = np.asarray(lambda_per_block, dtype=np.float64)
    if lams.shape != (blocks.B,):
        raise ValueError(f"need {blocks.B} block penalties, got {lams.shape}")
    if np.any(lams < 0):
        raise ValueError("block penalties must be nonnegative")
    values = lams[np.where(blocks.pair_block < 0, 0, blocks.pair_block)]
    values[np.eye(blocks.p, dtype=bool)] = 0.0
    return PenaltyMatrix(values)


def _block_stack(blocks: BlockStructure, b: int, lambdas,
                 lambda0: float) -> list[np.ndarray]:
    """Penalty matrices varying block b over its grid, others at lambda0."""
    stack = []
    for lam in lambdas:
        per_block = np.full(blocks.B, float(lambda0))
        per_block[b] = float(lam)
        stack.append(assemble_penalty(blocks, per_block).values)
    return stack


def block_lambda_max(S, blocks: BlockStructure) -> np.ndarray:
    """Per-block max |S_ij| over the block's variable pairs."""
    Sv = solvers._as_cov(S)
    iu, ju = edge_endpoints(blocks.p)
    absS = np.abs(Sv[iu, ju])
    return np.array([absS[blocks.edge_blocks == b].max()
                     for b in range(blocks.B)])


def build_block_lambda_grids(S, blocks: BlockStructure, L: int,
                             lambda0: float = 0.1, target_density: float = 0.5,
                             floor_ratio: float = 1e-3,
                             tol: float = 1e-4) -> list[np.ndarray]:
    """Per-block log-spaced grids from the block's lambda_max down to the
    penalty reaching the target within-block edge density on the full data."""
    Sv = solvers._as_cov(S)
    if blocks.G == 1:
        return [stability.build_lambda_grid_glasso(
            Sv, L, target_density, floor_ratio, tol)]
    lam_maxes = block_lambda_max(Sv, blocks)
    iu, ju = edge_endpoints(blocks.p)
    grids = []
    for b in range(blocks.B):
        lam_max = float(lam_maxes[b])
        if lam_max <= 0:
            raise ValueError(f"block {b} has no off-diagonal dependence")
        edge_idx = blocks.block_edge_indices(b)
        state = solvers.GlassoState(Sv)

        def density_at(lam, b=b, edge_idx=edge_idx, state=state):
            per_block = np.full(blocks.B, float(lambda0))
            per_block[b] = lam
            Lam = assemble_penalty(blocks, per_block).values
            est = solvers.fit_glasso(Sv, Lam, tol=tol, state=state)
            sel = est.support[iu, ju][edge_idx]
            return sel.sum() / len(edge_idx)

        lam_min = stability._bisect_lambda_min(
            density_at, lam_max, target_density, floor_ratio,
            f"block {b} grid")
        grids.append(np.geomspace(lam_max, lam_min, L))
    return grids


def _restrict_props(props: SelectionProportionArray, blocks: BlockStructure,
                    b: int) -> SelectionProportionArray:
    idx = blocks.block_edge_indices(b)
    return SelectionProportionArray(
        counts=props.counts[:, idx],
        K_effective=props.K_effective,
        lambdas=props.lambdas,
        q=props.group_q[:, b],
        kind="edge",
    )


@dataclass
class BlockCalibration:
    block: int
    result: CalibrationResult
    grid: CalibrationGrid | None       # None in joint multi-parameter mode
    surface: StabilityScoreSurface | None
    edge_indices: np.ndarray  # global edge indices of this block

    @property
    def selected_edges(self) -> np.ndarray:
        return self.edge_indices[self.result.selected]


@dataclass
class MultiBlockResult:
    blocks: BlockStructure
    mode: str                      # "blockwise" or "multiparameter"
    lambda0: float | None
    per_block: list
    selected_edges: np.ndarray     # union, global edge indices
    overall_pfer: float

    @property
    def lambda_hats(self) -> np.ndarray:
        return np.array([bc.result.lambda_hat for bc in self.per_block])

    @property
    def pi_hats(self) -> np.ndarray:
        return np.array([bc.result.pi_hat for bc in self.per_block])


def _split_eta(eta, blocks: BlockStructure):
    """Apportion the error budget across blocks proportionally to size."""
    if eta is None:
        return [None] * blocks.B
    total = blocks.block_sizes.sum()
    return [float(eta) * int(sz) / total for sz in blocks.block_sizes]


def calibrate_blockwise(X, blocks: BlockStructure, lambda0: float = 0.1,
                        lambda_grids=None, pis=None,
                        plan: ResamplingPlan | None = None,
                        pfer_method: str = "MB", eta: float | None = None,
                        L: int = 30, tol: float = 1e-4,
                        n_jobs: int = 1) -> MultiBlockResult:
    """Calibrate each block separately with the other blocks weakly
    penalized at lambda0, and return the union of block-stable edges."""
    if lambda0 < 0:
        raise ValueError("lambda0 must be nonnegative")
    X = solvers._as_design(X)
    if blocks.p != X.p:
        raise ValueError("block structure does not match the data dimension")
    plan = plan or ResamplingPlan()
    pis = build_pi_grid(31) if pis is None else np.asarray(pis, float)
    if lambda_grids is None:
        S = solvers.empirical_covariance(X)
        lambda_grids = build_block_lambda_grids(S, blocks, L, lambda0,
                                                tol=tol)
    etas = _split_eta(eta, blocks)

    per_block = []
    selected = []
    overall_pfer = 0.0
    for b in range(blocks.B):
        if blocks.G == 1:
            stack = scalar_penalty_stack(lambda_grids[b], blocks.p)
        else:
            stack = _block_stack(blocks, b, lambda_grids[b], lambda0)
        props = selection_proportions(
            X.values, lambda_grids[b], plan,
            glasso_stack_selector(stack, tol), kind="edge",
            feature_groups=blocks.edge_blocks, n_jobs=n_jobs,
        )
        props_b = _restrict_props(props, blocks, b)
        grid_b = CalibrationGrid.from_proportions(props_b, pis)
        surface_b = score_surface(props_b, grid_b, pfer_method, etas[b])
        try:
            result_b = calibrate(surface_b, grid_b, props_b)
        except ValueError as exc:
            raise ValueError(f"block {b}: {exc}") from exc
        bc = BlockCalibration(b, result_b, grid_b, surface_b,
                              blocks.block_edge_indices(b))
        per_block.append(bc)
        selected.append(bc.selected_edges)
        overall_pfer += result_b.pfer_bound

    union = np.sort(np.concatenate(selected)) if selected else np.array([], int)
    return MultiBlockResult(blocks, "blockwise", lambda0, per_block, union,
                            overall_pfer)


MAX_JOINT_CELLS = 10**6


def calibrate_multiparameter(X, blocks: BlockStructure, lambda_grids=None,
                             pis=None, plan: ResamplingPlan | None = None,
                             pfer_method: str = "MB",
                             eta: float | None = None, L: int = 5,
                             grid_lambda0: float = 0.1, tol: float = 1e-4,
                             n_jobs: int = 1) -> MultiBlockResult:
    """Joint calibration over the product grid of per-block penalties.

    Every combination of per-block penalties is fitted on every resampled
    dataset; the joint score decomposes over blocks for a fixed penalty
    combination, so each block's threshold is maximized independently and
    the block scores summed. Combinations are enumerated from sparsest and
    ties keep the first (sparsest) maximum.
    """
    X = solvers._as_design(X)
    if blocks.p != X.p:
        raise ValueError("block structure does not match the data dimension")
    plan = plan or ResamplingPlan()
    pis = build_pi_grid(31) if pis is None else np.asarray(pis, float)
    if lambda_grids is None:
        S = solvers.empirical_covariance(X)
        lambda_grids = build_block_lambda_grids(S, blocks, L, grid_lambda0,
                                                tol=tol)
    n_cells = int(np.prod([len(g) for g in lambda_grids]))
    if n_cells > MAX_JOINT_CELLS:
        raise ValueError(
            f"joint penalty grid has {n_cells} cells (> {MAX_JOINT_CELLS}); "
            "use calibrate_blockwise instead"
        )

    combos = list(itertools.product(*lambda_grids))
    stack = [assemble_penalty(blocks, combo).values for combo in combos]
    props = selection_proportions(
        X.values, np.arange(len(combos), dtype=float), plan,
        glasso_stack_selector(stack, tol), kind="edge",
        feature_groups=blocks.edge_blocks, n_jobs=n_jobs,
    )
    etas = _split_eta(eta, blocks)
    K = props.K_effective

    thresholds = [stability.category_thresholds(K, pi) for pi in pis]
    best_combo = None
    best_total = -np.inf
    best_cells = None
    for c in range(len(combos)):
        total = 0.0
        cells = []
        for b in range(blocks.B):
            idx = blocks.block_edge_indices(b)
            counts = props.counts[c, idx]
            N_b = len(idx)
            q_cb = float(props.group_q[c, b])
            p_null = q_cb / N_b
            table = (stability.binomial_logpmf_table(K, p_null)
                     if 0.0 < p_null < 1.0 else None)
            best_pi = None
            for m, pi in enumerate(pis):
                t_in, t_out = thresholds[m]
                try:
                    bound = pfer_bound(pfer_method, q_cb, N_b, pi, K)
                except ValueError:
                    continue
                if etas[b] is not None and bound > etas[b]:
                    continue
                lp_out, lp_mid, lp_in = stability._category_logprobs(
                    K, p_null, t_in, t_out, table)
                n_in = int(np.count_nonzero(counts >= t_in))
                n_out = int(np.count_nonzero(counts <= t_out))
                n_mid = N_b - n_in - n_out
                val = 0.0
                for n_cat, lp in ((n_out, lp_out), (n_mid, lp_mid),
                                  (n_in, lp_in)):
                    if n_cat == 0:
                        continue
                    if lp == -np.inf:
                        val = -np.inf
                        break
                    val -= n_cat * lp
                if val == -np.inf:
                    continue
                # ties prefer the stricter threshold, as in the single-block
                # calibration
                if best_pi is None or val > best_pi[1] or \
                        (val == best_pi[1] and m > best_pi[0]):
                    best_pi = (m, val, bound)
            if best_pi is None:
                total = -np.inf
                break
            total += best_pi[1]
            cells.append(best_pi)
        if total > best_total:
            best_total = total
            best_combo = c
            best_cells = cells
    if best_combo is None:
        raise ValueError(
            "no feasible joint penalty combination; raise the error budget"
        )

    per_block = []
    selected = []
    overall_pfer = 0.0
    for b in range(blocks.B):
        idx = blocks.block_edge_indices(b)
        counts = props.counts[best_combo, idx]
        m, score_b, bound_b = best_cells[b]
        t_in, _ = thresholds[m]
        sel_local = np.flatnonzero(counts >= t_in)
        result_b = CalibrationResult(
            lambda_hat=float(combos[best_combo][b]),
            pi_hat=float(pis[m]),
            score=float(score_b),
            pfer_bound=float(bound_b),
            selected=sel_local,
            proportions=counts / K,
            categories=stability.classify_counts(counts, K, pis[m]),
            lambda_index=best_combo,
            pi_index=m,
        )
        bc = BlockCalibration(b, result_b, None, None, idx)
        per_block.append(bc)
        selected.append(bc.selected_edges)
        overall_pfer += bound_b

    union = np.sort(np.concatenate(selected)) if selected else np.array([], int)
    return MultiBlockResult(blocks, "multiparameter", None, per_block, union,
                            overall_pfer)
