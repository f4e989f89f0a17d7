"""Selection performance of a feature set against the ground truth."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(selected, truth, universe_size: int) -> ConfusionCounts:
    """Set-intersection counts of selected vs true features in 0..N-1."""
    selected = set(int(j) for j in selected)
    truth = set(int(j) for j in truth)
    for j in selected | truth:
        if not 0 <= j < universe_size:
            raise ValueError(f"feature {j} outside universe of size "
                             f"{universe_size}")
    tp = len(selected & truth)
    fp = len(selected - truth)
    fn = len(truth - selected)
    tn = universe_size - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


def precision_recall_f1(c: ConfusionCounts) -> tuple[float, float, float]:
    """(precision, recall, F1) with explicit empty-set conventions.

    No selections: precision is 1 when nothing was missed (vacuously
    perfect), else 0. Empty truth: recall 1. F1 = 2pr/(p+r), 0 when both
    are 0.
    """
    if c.tp + c.fp == 0:
        precision = 1.0 if c.fn == 0 else 0.0
    else:
        precision = c.tp / (c.tp + c.fp)
    recall = 1.0 if c.tp + c.fn == 0 else c.tp / (c.tp + c.fn)
    f1 = 0.0 if precision + recall == 0 else \
        2.0 * precision * recall / (precision + recall)
    return precision, recall, f1
