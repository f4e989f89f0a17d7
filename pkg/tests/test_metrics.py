import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabsel.metrics import ConfusionCounts, confusion, precision_recall_f1


def test_perfect_selection():
    c = confusion({1, 2, 3}, {1, 2, 3}, 10)
    assert (c.tp, c.fp, c.fn, c.tn) == (3, 0, 0, 7)
    assert precision_recall_f1(c) == (1.0, 1.0, 1.0)


def test_empty_selection_with_truth():
    c = confusion(set(), set(range(10)), 20)
    assert (c.tp, c.fn) == (0, 10)
    p, r, f1 = precision_recall_f1(c)
    assert (p, r, f1) == (0.0, 0.0, 0.0)


def test_vacuous_perfect():
    c = confusion(set(), set(), 5)
    assert precision_recall_f1(c) == (1.0, 1.0, 1.0)


def test_half_precision_full_recall():
    c = ConfusionCounts(tp=5, fp=5, fn=0, tn=10)
    p, r, f1 = precision_recall_f1(c)
    assert (p, r) == (0.5, 1.0)
    assert f1 == pytest.approx(2 / 3)


def test_graph_example_counts():
    # 47 right, 9 wrong, 2 missed
    c = ConfusionCounts(tp=47, fp=9, fn=2, tn=4892)
    p, r, f1 = precision_recall_f1(c)
    assert p == pytest.approx(47 / 56)
    assert r == pytest.approx(47 / 49)
    assert f1 == pytest.approx(2 * p * r / (p + r))
    assert f1 == pytest.approx(0.8952, abs=1e-4)


def test_counts_match_brute_force_loop():
    rng = np.random.default_rng(0)
    for _ in range(20):
        universe = int(rng.integers(5, 60))
        sel = set(rng.choice(universe, rng.integers(0, universe),
                             replace=False).tolist())
        tru = set(rng.choice(universe, rng.integers(0, universe),
                             replace=False).tolist())
        c = confusion(sel, tru, universe)
        tp = fp = fn = tn = 0
        for j in range(universe):
            if j in sel and j in tru:
                tp += 1
            elif j in sel:
                fp += 1
            elif j in tru:
                fn += 1
            else:
                tn += 1
        assert (c.tp, c.fp, c.fn, c.tn) == (tp, fp, fn, tn)
        assert c.total == universe


def test_outside_universe_rejected():
    with pytest.raises(ValueError, match="outside universe"):
        confusion({10}, set(), 10)
    with pytest.raises(ValueError, match="outside universe"):
        confusion(set(), {-1}, 10)


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        ConfusionCounts(-1, 0, 0, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_f1_symmetry_and_range(seed):
    rng = np.random.default_rng(seed)
    universe = int(rng.integers(2, 40))
    sel = set(rng.choice(universe, rng.integers(0, universe + 1),
                         replace=False).tolist())
    tru = set(rng.choice(universe, rng.integers(0, universe + 1),
                         replace=False).tolist())
    a = confusion(sel, tru, universe)
    b = confusion(tru, sel, universe)
    assert (a.fp, a.fn) == (b.fn, b.fp)
    fa = precision_recall_f1(a)[2]
    fb = precision_recall_f1(b)[2]
    assert fa == pytest.approx(fb)
    assert 0.0 <= fa <= 1.0
    if sel == tru:
        assert fa == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_adding_true_feature_never_hurts(seed):
    rng = np.random.default_rng(seed)
    universe = int(rng.integers(3, 30))
    tru = set(rng.choice(universe, max(1, int(rng.integers(1, universe))),
                         replace=False).tolist())
    sel = set(rng.choice(universe, rng.integers(0, universe),
                         replace=False).tolist())
    missing = tru - sel
    if not missing:
        return
    extra = next(iter(missing))
    f_before = precision_recall_f1(confusion(sel, tru, universe))[2]
    f_after = precision_recall_f1(confusion(sel | {extra}, tru, universe))[2]
    assert f_after >= f_before
