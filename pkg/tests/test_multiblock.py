import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabsel.multiblock import (MAX_JOINT_CELLS, assemble_penalty,
                                block_lambda_max, calibrate_blockwise,
                                calibrate_multiparameter,
                                make_block_structure)
from stabsel.pipeline import calibrate_glasso, glasso_stack_selector, \
    scalar_penalty_stack
from stabsel.resampling import ResamplingPlan, selection_proportions
from stabsel.simulate import GraphSpec, simulate_graph_dataset
from stabsel.solvers import empirical_covariance, fit_glasso, DesignMatrix
from stabsel.util import n_edges


def test_block_structure_counts_two_groups_of_50():
    bs = make_block_structure((50, 50))
    assert bs.B == 3
    assert list(bs.block_sizes) == [1225, 1225, 2500]
    assert bs.block_sizes.sum() == n_edges(100)


def test_block_structure_single_group():
    bs = make_block_structure((7,))
    assert bs.B == 1
    assert list(bs.block_sizes) == [21]


def test_block_structure_three_groups():
    bs = make_block_structure((2, 2, 2))
    assert bs.B == 6
    # diagonal blocks first, then off-diagonal in lexicographic order
    assert bs.pair_block[0, 1] == 0
    assert bs.pair_block[2, 3] == 1
    assert bs.pair_block[4, 5] == 2
    assert bs.pair_block[0, 2] == 3  # groups (0, 1)
    assert bs.pair_block[0, 4] == 4  # groups (0, 2)
    assert bs.pair_block[2, 4] == 5  # groups (1, 2)
    assert np.all(np.diag(bs.pair_block) == -1)


def test_block_structure_partition_property():
    bs = make_block_structure((3, 4, 5))
    assert bs.block_sizes.sum() == n_edges(12)
    seen = np.concatenate([bs.block_edge_indices(b) for b in range(bs.B)])
    assert np.array_equal(np.sort(seen), np.arange(n_edges(12)))


def test_block_structure_rejects_small_group():
    with pytest.raises(ValueError, match="at least 2"):
        make_block_structure((5, 1))


def test_assemble_penalty_placement():
    bs = make_block_structure((2, 2))
    P = assemble_penalty(bs, [0.5, 0.7, 0.2]).values
    want = np.array([
        [0.0, 0.5, 0.2, 0.2],
        [0.5, 0.0, 0.2, 0.2],
        [0.2, 0.2, 0.0, 0.7],
        [0.2, 0.2, 0.7, 0.0],
    ])
    assert np.array_equal(P, want)


def test_assemble_penalty_scalar_equivalence():
    bs = make_block_structure((3, 5))
    P = assemble_penalty(bs, [0.4, 0.4, 0.4]).values
    off = ~np.eye(8, dtype=bool)
    assert np.all(P[off] == 0.4)
    assert np.all(np.diag(P) == 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_assemble_penalty_matches_block_of_everywhere(seed):
    rng = np.random.default_rng(seed)
    G = int(rng.integers(1, 5))
    sizes = tuple(int(s) for s in rng.integers(2, 6, size=G))
    bs = make_block_structure(sizes)
    lams = rng.uniform(0.0, 2.0, bs.B)
    P = assemble_penalty(bs, lams).values
    p = bs.p
    for i in range(p):
        for j in range(p):
            if i == j:
                assert P[i, j] == 0.0
            else:
                assert P[i, j] == lams[bs.pair_block[i, j]]


def test_assemble_penalty_validation():
    bs = make_block_structure((2, 2))
    with pytest.raises(ValueError):
        assemble_penalty(bs, [0.1, 0.2])
    with pytest.raises(ValueError):
        assemble_penalty(bs, [-0.1, 0.2, 0.3])


def test_huge_cross_penalty_blocks_cross_edges():
    bs = make_block_structure((6, 6))
    ds = simulate_graph_dataset(GraphSpec("erdos_renyi", 12, 0.3), n=300,
                                blocks=bs, v_b=1.0, seed=3)
    S = empirical_covariance(DesignMatrix.from_array(ds.X))
    P = assemble_penalty(bs, [0.01, 0.01, 100.0])
    est = fit_glasso(S, P)
    cross = bs.pair_block == 2
    assert est.support[cross].sum() == 0
    within = (bs.pair_block >= 0) & ~cross
    assert est.support[within].sum() > 0


def test_block_lambda_max_matches_direct_max():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((60, 8))
    S = empirical_covariance(DesignMatrix.from_array(X)).values
    bs = make_block_structure((3, 5))
    lm = block_lambda_max(S, bs)
    for b in range(3):
        mask = bs.pair_block == b
        assert lm[b] == pytest.approx(np.abs(S[mask]).max())


def _small_block_dataset(seed=7):
    bs = make_block_structure((8, 8))
    ds = simulate_graph_dataset(GraphSpec("erdos_renyi", 16, 0.15), n=60,
                                blocks=bs, v_b=0.3, seed=seed)
    return bs, ds


def test_single_group_blockwise_reduces_to_single_block():
    _, ds = _small_block_dataset()
    plan = ResamplingPlan("complementary_pairs", K=12, master_seed=5)
    single = calibrate_glasso(ds.X, L=8, plan=plan)
    bs1 = make_block_structure((16,))
    mb = calibrate_blockwise(ds.X, bs1, lambda0=0.1, plan=plan, L=8)
    res = mb.per_block[0].result
    assert res.lambda_hat == single.result.lambda_hat
    assert res.pi_hat == single.result.pi_hat
    assert res.score == single.result.score
    assert np.array_equal(mb.selected_edges, single.result.selected)
    assert np.array_equal(res.proportions, single.result.proportions)


def test_single_group_joint_reduces_to_single_block():
    _, ds = _small_block_dataset()
    plan = ResamplingPlan("complementary_pairs", K=12, master_seed=5)
    bs1 = make_block_structure((16,))
    grids = [np.geomspace(1.0, 0.05, 6)]
    S = empirical_covariance(DesignMatrix.from_array(ds.X))
    mb = calibrate_multiparameter(ds.X, bs1, lambda_grids=grids, plan=plan)
    single = calibrate_glasso(ds.X, lambdas=grids[0], plan=plan)
    res = mb.per_block[0].result
    assert res.lambda_hat == single.result.lambda_hat
    assert res.pi_hat == single.result.pi_hat
    assert res.score == pytest.approx(single.result.score, abs=1e-9)
    assert np.array_equal(mb.selected_edges, single.result.selected)


def test_blockwise_result_consistency():
    bs, ds = _small_block_dataset()
    plan = ResamplingPlan("complementary_pairs", K=12, master_seed=6)
    mb = calibrate_blockwise(ds.X, bs, lambda0=0.1, plan=plan, L=6)
    # PFER additivity
    assert mb.overall_pfer == pytest.approx(
        sum(bc.result.pfer_bound for bc in mb.per_block))
    # union consistency, recomputable from stored proportions
    rebuilt = []
    for bc in mb.per_block:
        sel_local = np.flatnonzero(bc.result.proportions >= bc.result.pi_hat)
        rebuilt.append(bc.edge_indices[sel_local])
    rebuilt = np.sort(np.concatenate(rebuilt))
    assert np.array_equal(mb.selected_edges, rebuilt)
    # every selected edge belongs to exactly one block
    assert len(np.unique(mb.selected_edges)) == len(mb.selected_edges)


def test_blockwise_eta_apportioned_and_respected():
    bs, ds = _small_block_dataset()
    plan = ResamplingPlan("complementary_pairs", K=12, master_seed=6)
    eta = 30.0
    mb = calibrate_blockwise(ds.X, bs, lambda0=0.1, plan=plan, L=6, eta=eta)
    shares = bs.block_sizes / bs.block_sizes.sum()
    for bc, share in zip(mb.per_block, shares):
        assert bc.result.pfer_bound <= eta * share + 1e-12
    assert mb.overall_pfer <= eta + 1e-12


def test_blockwise_infeasible_block_named():
    bs, ds = _small_block_dataset()
    plan = ResamplingPlan("complementary_pairs", K=12, master_seed=6)
    with pytest.raises(ValueError, match="block 0"):
        calibrate_blockwise(ds.X, bs, lambda0=0.1, plan=plan, L=6, eta=1e-9)


def test_joint_grid_guard():
    bs = make_block_structure((4, 4, 4, 4, 4))  # B = 15 blocks
    X = np.random.default_rng(0).standard_normal((30, 20))
    grids = [np.geomspace(1.0, 0.1, 3)] * bs.B  # 3^15 >> guard
    assert 3 ** bs.B > MAX_JOINT_CELLS
    with pytest.raises(ValueError, match="blockwise"):
        calibrate_multiparameter(X, bs, lambda_grids=grids)


def test_joint_single_shared_lambda_equals_single_block_fit():
    bs, ds = _small_block_dataset()
    plan = ResamplingPlan("complementary_pairs", K=10, master_seed=8)
    lam = 0.3
    grids = [np.array([lam])] * bs.B
    mb = calibrate_multiparameter(ds.X, bs, lambda_grids=grids, plan=plan)
    # the only joint combination is a constant penalty, so its selection
    # counts must match a scalar single-block run at that penalty
    stack = scalar_penalty_stack([lam], 16)
    props = selection_proportions(ds.X, np.array([lam]), plan,
                                  glasso_stack_selector(stack, 1e-4),
                                  kind="edge")
    joint_counts = np.concatenate(
        [np.asarray(bc.result.proportions) * props.K_effective
         for bc in mb.per_block])
    order = np.concatenate([bc.edge_indices for bc in mb.per_block])
    rebuilt = np.zeros(n_edges(16))
    rebuilt[order] = joint_counts
    assert np.array_equal(rebuilt.astype(int), props.counts[0])


def test_blockwise_rejects_mismatched_blocks():
    _, ds = _small_block_dataset()
    with pytest.raises(ValueError, match="dimension"):
        calibrate_blockwise(ds.X, make_block_structure((4, 4)))
