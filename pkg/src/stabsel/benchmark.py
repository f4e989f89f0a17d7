"""Multi-dataset benchmark harness.

Simulates datasets, runs the configured calibration methods on each, scores
the selected sets against the ground truth and aggregates medians and
interquartile ranges per method. All per-dataset work is seeded from
(master seed, dataset index), so results are byte-identical for any worker
count; wall times are kept out of the deterministic tables and written to a
separate timings file.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, fields

import numpy as np
from joblib import Parallel, delayed

from . import pipeline, solvers, stability
from .metrics import confusion, precision_recall_f1
from .multiblock import (calibrate_blockwise, calibrate_multiparameter,
                         make_block_structure)
from .resampling import ResamplingPlan
from .simulate import GraphSpec, simulate_graph_dataset, simulate_regression
from .stability import CalibrationGrid, build_lambda_grid_glasso, \
    build_pi_grid, calibrate, information_criteria, score_surface
from .util import mix_seed, n_edges

ROW_HEADER = ["dataset", "seed", "method", "part", "status",
              "tp", "fp", "fn", "precision", "recall", "f1"]


@dataclass
class BenchmarkRow:
    dataset: int
    seed: int
    method: str
    part: str
    status: str
    tp: int | None = None
    fp: int | None = None
    fn: int | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    wall_time_s: float | None = None

    def tsv_cells(self):
        vals = [self.dataset, self.seed, self.method, self.part, self.status,
                self.tp, self.fp, self.fn, self.precision, self.recall,
                self.f1]
        return ["" if v is None else v for v in vals]


@dataclass
class Method:
    label: str
    kind: str
    pfer_method: str | None = None
    eta: float | None = None
    gamma: float = 0.5
    pi_list: tuple = ()
    lambda0: float = 0.1


def parse_method(text: str) -> Method:
    parts = text.split(":")
    head = parts[0]
    if head in ("aic", "bic"):
        _expect_parts(text, parts, 1)
        return Method(text, head)
    if head == "ebic":
        _expect_parts(text, parts, 1, 2)
        gamma = float(parts[1]) if len(parts) == 2 else 0.5
        return Method(text, "ebic", gamma=gamma)
    if head == "score-unconstrained":
        _expect_parts(text, parts, 1)
        return Method(text, "score")
    if head == "score-constrained":
        _expect_parts(text, parts, 3)
        return Method(text, "score", pfer_method=_pfer(parts[1]),
                      eta=float(parts[2]))
    if head == "errorcontrol":
        _expect_parts(text, parts, 4)
        pi_list = tuple(float(x) for x in parts[3].split(","))
        if not pi_list:
            raise ValueError(f"method {text!r}: empty pi list")
        return Method(text, "errorcontrol", pfer_method=_pfer(parts[1]),
                      eta=float(parts[2]), pi_list=pi_list)
    if head == "singleblock":
        _expect_parts(text, parts, 1)
        return Method(text, "singleblock")
    if head == "multiblock-blockwise":
        _expect_parts(text, parts, 1, 2)
        lam0 = float(parts[1]) if len(parts) == 2 else 0.1
        return Method(text, "mb_blockwise", lambda0=lam0)
    if head == "multiblock-joint":
        _expect_parts(text, parts, 1)
        return Method(text, "mb_joint")
    raise ValueError(f"unknown benchmark method {text!r}")


def _expect_parts(text, parts, *counts):
    if len(parts) not in counts:
        raise ValueError(f"malformed method spec {text!r}")


def _pfer(name: str) -> str:
    if name not in stability.PFER_METHODS:
        raise ValueError(f"pfer method must be one of {stability.PFER_METHODS}")
    return name


TASKS = ("glasso", "regression", "multiblock")
_TASK_METHODS = {
    "glasso": {"aic", "bic", "ebic", "score", "errorcontrol"},
    "regression": {"score", "errorcontrol"},
    "multiblock": {"singleblock", "mb_blockwise", "mb_joint"},
}


@dataclass
class BenchmarkConfig:
    task: str = "glasso"
    n_datasets: int = 10
    n: int = 200
    p: int = 100
    nu: float = 0.02
    topology: str = "erdos_renyi"
    blocks: tuple = ()
    vb: float = 1.0
    n_signal: int = 10
    ev: float = 0.6
    k: int = 100
    scheme: str = "complementary_pairs"
    tau: float = 0.5
    lambdas: int = 50
    lambdas_joint: int = 5
    pis: int = 31
    seed: int = 0
    methods: tuple = ("score-unconstrained",)
    threads: int = 1
    out: str = "benchmark"
    glasso_tol: float = 1e-4

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.n_datasets < 0:
            raise ValueError("n_datasets must be nonnegative")
        self.blocks = tuple(int(b) for b in self.blocks)
        self.methods = tuple(self.methods)
        parsed = [parse_method(m) for m in self.methods]
        allowed = _TASK_METHODS[self.task]
        for m in parsed:
            if m.kind not in allowed:
                raise ValueError(
                    f"method {m.label!r} is not available for task "
                    f"{self.task!r}"
                )
        if self.task == "multiblock" and len(self.blocks) < 2:
            raise ValueError("multiblock task needs at least 2 groups")
        if self.blocks and sum(self.blocks) != self.p:
            raise ValueError("block sizes must sum to p")
        if self.lambdas < 2 or self.pis < 2:
            raise ValueError("grids need at least 2 values")
        if self.threads < 0:
            raise ValueError("threads must be >= 0 (0 = auto)")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def parsed_methods(self):
        return [parse_method(m) for m in self.methods]


def _metric_row(cfg, d, seed, method, part, selected, truth, universe,
                elapsed) -> BenchmarkRow:
    c = confusion(selected, truth, universe)
    precision, recall, f1 = precision_recall_f1(c)
    return BenchmarkRow(d, seed, method, part, "ok", c.tp, c.fp, c.fn,
                        precision, recall, f1, elapsed)


def _failed_row(d, seed, method, part="overall") -> BenchmarkRow:
    return BenchmarkRow(d, seed, method, part, "failed")


def _run_glasso_dataset(cfg: BenchmarkConfig, d: int):
    seed = mix_seed(cfg.seed, d)
    spec = GraphSpec(cfg.topology, cfg.p, cfg.nu)
    ds = simulate_graph_dataset(spec, cfg.n, seed=seed)
    truth = ds.true_edges
    universe = n_edges(cfg.p)
    S = solvers.empirical_covariance(solvers.DesignMatrix.from_array(ds.X))
    lams = build_lambda_grid_glasso(S, cfg.lambdas, tol=cfg.glasso_tol)
    pis = build_pi_grid(cfg.pis)
    methods = cfg.parsed_methods()
    rows = []

    ic_result = None
    shared_run = None
    shared_time = 0.0

    def stability_props():
        nonlocal shared_run, shared_time
        if shared_run is None:
            plan = ResamplingPlan(cfg.scheme, cfg.k, seed, cfg.tau)
            t0 = time.perf_counter()
            shared_run = pipeline.calibrate_glasso(
                ds.X, lambdas=lams, pis=pis, plan=plan,
                tol=cfg.glasso_tol,
            )
            shared_time = time.perf_counter() - t0
        return shared_run

    for m in methods:
        t0 = time.perf_counter()
        try:
            if m.kind in ("aic", "bic", "ebic"):
                if ic_result is None:
                    ic_result = information_criteria(S, lams, cfg.n,
                                                     tol=cfg.glasso_tol)
                if m.kind == "ebic" and m.gamma != ic_result.gamma:
                    sel = np.flatnonzero(ic_result.ebic_support(m.gamma))
                else:
                    sel = np.flatnonzero(ic_result.best_support[m.kind])
                rows.append(_metric_row(cfg, d, seed, m.label, "overall",
                                        sel, truth, universe,
                                        time.perf_counter() - t0))
            elif m.kind == "score":
                run = stability_props()
                surface = score_surface(run.props, run.grid,
                                        m.pfer_method or "MB", m.eta)
                result = calibrate(surface, run.grid, run.props)
                rows.append(_metric_row(cfg, d, seed, m.label, "overall",
                                        result.selected, truth, universe,
                                        time.perf_counter() - t0))
            elif m.kind == "errorcontrol":
                run = stability_props()
                for pi in m.pi_list:
                    label = f"{m.label}:pi={pi:g}"
                    hit = pipeline.error_control_lambda(
                        run.props, run.grid, pi, m.eta, m.pfer_method)
                    sel = hit[1] if hit is not None else np.array([], int)
                    rows.append(_metric_row(cfg, d, seed, label, "overall",
                                            sel, truth, universe,
                                            time.perf_counter() - t0))
        except Exception as exc:
            warnings.warn(f"dataset {d}, method {m.label}: {exc}")
            rows.append(_failed_row(d, seed, m.label))
    return rows, {"dataset": d, "shared_resampling_s": shared_time}


def _block_parts(blocks):
    names = {}
    G = blocks.G
    b = 0
    for g in range(G):
        names[b] = f"within-{g + 1}"
        b += 1
    for g in range(G):
        for h in range(g + 1, G):
            names[b] = f"between-{g + 1}-{h + 1}"
            b += 1
    return names


def _block_rows(cfg, d, seed, label, blocks, selected, truth, elapsed):
    universe = n_edges(cfg.p)
    rows = [_metric_row(cfg, d, seed, label, "overall", selected, truth,
                        universe, elapsed)]
    part_names = _block_parts(blocks)
    sel = np.asarray(selected)
    tru = np.asarray(truth)
    for b, part in part_names.items():
        edges = blocks.block_edge_indices(b)
        mask = np.isin(sel, edges)
        tmask = np.isin(tru, edges)
        rows.append(_metric_row(cfg, d, seed, label, part, sel[mask],
                                tru[tmask], universe, None))
    return rows


def _run_multiblock_dataset(cfg: BenchmarkConfig, d: int):
    seed = mix_seed(cfg.seed, d)
    blocks = make_block_structure(cfg.blocks)
    spec = GraphSpec(cfg.topology, cfg.p, cfg.nu)
    ds = simulate_graph_dataset(spec, cfg.n, blocks=blocks, v_b=cfg.vb,
                                seed=seed)
    truth = ds.true_edges
    pis = build_pi_grid(cfg.pis)
    plan = ResamplingPlan(cfg.scheme, cfg.k, seed, cfg.tau)
    rows = []
    timings = {"dataset": d}
    for m in cfg.parsed_methods():
        t0 = time.perf_counter()
        try:
            if m.kind == "singleblock":
                run = pipeline.calibrate_glasso(
                    ds.X, L=cfg.lambdas, pis=pis, plan=plan,
                    tol=cfg.glasso_tol,
                )
                selected = run.result.selected
            elif m.kind == "mb_blockwise":
                mb = calibrate_blockwise(
                    ds.X, blocks, lambda0=m.lambda0, pis=pis, plan=plan,
                    L=cfg.lambdas, tol=cfg.glasso_tol,
                )
                selected = mb.selected_edges
            else:  # mb_joint
                mb = calibrate_multiparameter(
                    ds.X, blocks, pis=pis, plan=plan, L=cfg.lambdas_joint,
                    tol=cfg.glasso_tol,
                )
                selected = mb.selected_edges
            elapsed = time.perf_counter() - t0
            rows.extend(_block_rows(cfg, d, seed, m.label, blocks, selected,
                                    truth, elapsed))
            timings[m.label] = elapsed
        except Exception as exc:
            warnings.warn(f"dataset {d}, method {m.label}: {exc}")
            rows.append(_failed_row(d, seed, m.label))
    return rows, timings


def _run_regression_dataset(cfg: BenchmarkConfig, d: int):
    seed = mix_seed(cfg.seed, d)
    ds = simulate_regression(cfg.n, cfg.p, cfg.n_signal, cfg.ev, seed=seed)
    truth = ds.signal_set
    plan = ResamplingPlan(cfg.scheme, cfg.k, seed, cfg.tau)
    rows = []
    shared = {}

    def run_once():
        if "run" not in shared:
            shared["run"] = pipeline.calibrate_lasso(
                ds.X, ds.y, L=cfg.lambdas, pis=build_pi_grid(cfg.pis),
                plan=plan,
            )
        return shared["run"]

    for m in cfg.parsed_methods():
        t0 = time.perf_counter()
        try:
            run = run_once()
            if m.kind == "score":
                surface = score_surface(run.props, run.grid,
                                        m.pfer_method or "MB", m.eta)
                result = calibrate(surface, run.grid, run.props)
                rows.append(_metric_row(cfg, d, seed, m.label, "overall",
                                        result.selected, truth, cfg.p,
                                        time.perf_counter() - t0))
            else:  # errorcontrol
                for pi in m.pi_list:
                    label = f"{m.label}:pi={pi:g}"
                    hit = pipeline.error_control_lambda(
                        run.props, run.grid, pi, m.eta, m.pfer_method)
                    sel = hit[1] if hit is not None else np.array([], int)
                    rows.append(_metric_row(cfg, d, seed, label, "overall",
                                            sel, truth, cfg.p,
                                            time.perf_counter() - t0))
        except Exception as exc:
            warnings.warn(f"dataset {d}, method {m.label}: {exc}")
            rows.append(_failed_row(d, seed, m.label))
    return rows, {"dataset": d}


_RUNNERS = {"glasso": _run_glasso_dataset,
            "multiblock": _run_multiblock_dataset,
            "regression": _run_regression_dataset}


def run_benchmark(cfg: BenchmarkConfig, progress=None):
    """Run all datasets; returns (rows, timings) with rows in a canonical
    order independent of the worker count."""
    runner = _RUNNERS[cfg.task]
    if cfg.n_datasets == 0:
        warnings.warn("benchmark configured with 0 datasets")
        return [], []
    n_jobs = cfg.threads if cfg.threads != 0 else -1
    if n_jobs == 1:
        results = []
        for d in range(cfg.n_datasets):
            results.append(runner(cfg, d))
            if progress:
                progress(d + 1, cfg.n_datasets)
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(runner)(cfg, d) for d in range(cfg.n_datasets)
        )
    rows = [row for rows_d, _ in results for row in rows_d]
    rows.sort(key=lambda r: (r.dataset, r.method, r.part))
    timings = [t for _, t in results]
    return rows, timings


def summarize(rows) -> dict:
    """Median and interquartile range per (method, part), Table-style."""
    groups = {}
    for r in rows:
        if r.status != "ok":
            groups.setdefault((r.method, r.part), {"failed": 0})
            groups[(r.method, r.part)]["failed"] = \
                groups[(r.method, r.part)].get("failed", 0) + 1
            continue
        g = groups.setdefault((r.method, r.part), {"failed": 0})
        for name in ("tp", "fp", "fn", "precision", "recall", "f1"):
            g.setdefault(name, []).append(getattr(r, name))
    out = {}
    for (method, part), g in sorted(groups.items()):
        entry = {"n": len(g.get("f1", [])), "failed": g.get("failed", 0)}
        for name in ("tp", "fp", "fn", "precision", "recall", "f1"):
            vals = np.asarray(g.get(name, []), dtype=np.float64)
            if vals.size == 0:
                continue
            med = float(np.median(vals))
            iqr = float(np.percentile(vals, 75) - np.percentile(vals, 25))
            entry[name] = {"median": med, "iqr": iqr,
                           "formatted": f"{med:.3f} [{iqr:.3f}]"}
        out.setdefault(method, {})[part] = entry
    return out
