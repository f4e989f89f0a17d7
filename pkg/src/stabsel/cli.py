"""Command-line surface.

Subcommands: `simulate graph|regression`, `calibrate lasso|glasso|multiblock`,
`score-grid` and `benchmark`. A JSON file passed with --config overrides the
corresponding flags; unknown config keys are rejected before any computation.
Exit codes: 0 success, 1 usage error, 2 runtime error. Progress goes to
stderr; data files are written where --out points.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import io, pipeline, solvers
from .benchmark import BenchmarkConfig, ROW_HEADER, run_benchmark, summarize
from .multiblock import (calibrate_blockwise, calibrate_multiparameter,
                         make_block_structure)
from .resampling import ResamplingPlan
from .simulate import GraphSpec, simulate_graph_dataset, simulate_regression
from .stability import (CalibrationGrid, build_pi_grid, calibrate,
                        score_surface, write_surface_tsv)
from .util import edge_endpoints

THREADS_ENV = "STABSEL_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _log(msg: str):
    print(msg, file=sys.stderr)


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}")


def _apply_config(args: argparse.Namespace, allowed: set[str]):
    """Overlay --config JSON onto parsed flags; config wins."""
    if not getattr(args, "config", None):
        return
    data = io.read_json(args.config)
    if not isinstance(data, dict):
        raise UsageError(f"{args.config}: config must be a JSON object")
    unknown = set(data) - allowed
    if unknown:
        raise UsageError(f"{args.config}: unknown config keys "
                         f"{sorted(unknown)}")
    for key, value in data.items():
        setattr(args, key, value)


# ---------------------------------------------------------------------------
# simulate


def _cmd_simulate_graph(args) -> int:
    _apply_config(args, {"p", "n", "nu", "topology", "blocks", "vb", "seed",
                         "out"})
    blocks = None
    if args.blocks:
        blocks = make_block_structure(_parse_int_list(args.blocks))
    topology = {"er": "erdos_renyi", "ba": "scale_free"}[args.topology]
    spec = GraphSpec(topology, args.p, args.nu)
    ds = simulate_graph_dataset(spec, args.n, blocks=blocks, v_b=args.vb,
                                seed=args.seed)
    names = [f"v{j + 1}" for j in range(args.p)]
    io.write_matrix_csv(f"{args.out}_data.csv", ds.X, names)
    iu, ju = edge_endpoints(args.p)
    on = ds.theta[iu, ju] > 0
    io.write_edge_list_csv(
        f"{args.out}_truth.csv",
        [(names[i], names[j]) for i, j in zip(iu[on], ju[on])],
    )
    io.write_json(f"{args.out}_meta.json", {
        "kind": "graph", "topology": topology, "p": args.p, "n": args.n,
        "nu": args.nu, "blocks": list(blocks.group_sizes) if blocks else None,
        "v_b": args.vb, "seed": args.seed, "u_used": ds.u_used,
        "n_true_edges": int(on.sum()),
    })
    _log(f"wrote {args.out}_data.csv ({args.n}x{args.p}), truth and meta")
    return 0


def _cmd_simulate_regression(args) -> int:
    _apply_config(args, {"n", "p", "signals", "ev", "seed", "out"})
    ds = simulate_regression(args.n, args.p, args.signals, args.ev, args.seed)
    names = [f"v{j + 1}" for j in range(args.p)]
    io.write_matrix_csv(f"{args.out}_data.csv",
                        np.column_stack([ds.X, ds.y]), names + ["y"])
    io.write_beta_csv(f"{args.out}_truth.csv", names, ds.beta_true)
    io.write_json(f"{args.out}_meta.json", {
        "kind": "regression", "n": args.n, "p": args.p,
        "n_signal": args.signals, "explained_variance": args.ev,
        "seed": args.seed, "sigma_noise": ds.sigma_noise,
    })
    _log(f"wrote {args.out}_data.csv ({args.n}x{args.p}+y), truth and meta")
    return 0


# ---------------------------------------------------------------------------
# calibrate


_CAL_KEYS = {"data", "out", "lambdas", "pis", "k", "scheme", "tau", "seed",
             "pfer_method", "pfer_max", "threads"}


def _plan_from_args(args) -> ResamplingPlan:
    return ResamplingPlan(args.scheme, args.k, args.seed, args.tau)


def _eta_from_args(args):
    if args.pfer_max is None:
        return None
    eta = float(args.pfer_max)
    return None if np.isinf(eta) else eta


def _edge_labels(names):
    iu, ju = edge_endpoints(len(names))
    return [f"{names[i]}|{names[j]}" for i, j in zip(iu, ju)]


def _result_payload(result, labels, kind):
    from .stability import CATEGORY_NAMES

    return {
        "kind": kind,
        "lambda_hat": result.lambda_hat,
        "pi_hat": result.pi_hat,
        "score": result.score,
        "pfer_bound": result.pfer_bound,
        "selected": [labels[j] for j in result.selected],
        "selected_indices": [int(j) for j in result.selected],
        "proportions": {labels[j]: float(result.proportions[j])
                        for j in range(len(labels))},
        "categories": {labels[j]: CATEGORY_NAMES[int(result.categories[j])]
                       for j in range(len(labels))},
    }


def _cmd_calibrate_lasso(args) -> int:
    _apply_config(args, _CAL_KEYS)
    values, names = io.read_matrix_csv(args.data)
    if "y" not in names:
        raise UsageError(f"{args.data}: lasso calibration needs a 'y' column")
    y_col = names.index("y")
    y = values[:, y_col]
    X = np.delete(values, y_col, axis=1)
    feature_names = [nm for nm in names if nm != "y"]
    run = pipeline.calibrate_lasso(
        solvers.DesignMatrix(X, feature_names), y, L=args.lambdas,
        pis=build_pi_grid(args.pis), plan=_plan_from_args(args),
        pfer_method=args.pfer_method, eta=_eta_from_args(args),
        n_jobs=args.threads,
    )
    _write_run_outputs(args.out, run, feature_names)
    _log(f"calibrated: lambda={run.result.lambda_hat:.6g} "
         f"pi={run.result.pi_hat:g} selected={run.result.n_selected}")
    return 0


def _cmd_calibrate_glasso(args) -> int:
    _apply_config(args, _CAL_KEYS)
    values, names = io.read_matrix_csv(args.data)
    run = pipeline.calibrate_glasso(
        solvers.DesignMatrix(values, names), L=args.lambdas,
        pis=build_pi_grid(args.pis), plan=_plan_from_args(args),
        pfer_method=args.pfer_method, eta=_eta_from_args(args),
        n_jobs=args.threads,
    )
    _write_run_outputs(args.out, run, _edge_labels(names))
    _log(f"calibrated: lambda={run.result.lambda_hat:.6g} "
         f"pi={run.result.pi_hat:g} selected edges={run.result.n_selected}")
    return 0


def _write_run_outputs(out, run, labels):
    io.write_json(f"{out}_result.json",
                  _result_payload(run.result, labels, run.kind))
    write_surface_tsv(f"{out}_surface.tsv", run.grid, run.surface)
    io.write_counts_csv(f"{out}_counts.csv", run.props, labels)


def _cmd_calibrate_multiblock(args) -> int:
    _apply_config(args, _CAL_KEYS | {"blocks", "lambda0", "joint"})
    if not args.blocks:
        raise UsageError("calibrate multiblock requires --blocks")
    values, names = io.read_matrix_csv(args.data)
    blocks = make_block_structure(_parse_int_list(args.blocks))
    X = solvers.DesignMatrix(values, names)
    plan = _plan_from_args(args)
    pis = build_pi_grid(args.pis)
    eta = _eta_from_args(args)
    if args.joint:
        mb = calibrate_multiparameter(X, blocks, pis=pis, plan=plan,
                                      pfer_method=args.pfer_method, eta=eta,
                                      L=args.lambdas, n_jobs=args.threads)
    else:
        mb = calibrate_blockwise(X, blocks, lambda0=args.lambda0, pis=pis,
                                 plan=plan, pfer_method=args.pfer_method,
                                 eta=eta, L=args.lambdas,
                                 n_jobs=args.threads)
    labels = _edge_labels(names)
    payload = {
        "kind": "edge", "mode": mb.mode, "lambda0": mb.lambda0,
        "overall_pfer": mb.overall_pfer,
        "selected": [labels[j] for j in mb.selected_edges],
        "selected_indices": [int(j) for j in mb.selected_edges],
        "blocks": [],
    }
    for bc in mb.per_block:
        block_labels = [labels[j] for j in bc.edge_indices]
        payload["blocks"].append(
            _result_payload(bc.result, block_labels, "edge")
            | {"block": bc.block}
        )
    io.write_json(f"{args.out}_result.json", payload)
    if mb.mode == "blockwise":
        _write_block_surfaces(f"{args.out}_surface.tsv", mb)
    _log(f"calibrated {mb.mode}: selected edges={len(mb.selected_edges)} "
         f"overall pfer={mb.overall_pfer:.4g}")
    return 0


def _write_block_surfaces(path, mb):
    from .stability import surface_rows

    header = ["block", "lambda", "q", "pi", "score", "pfer", "feasible"]
    rows = []
    for bc in mb.per_block:
        rows.extend(surface_rows(bc.grid, bc.surface, block=bc.block))
    io.write_tsv(path, header, rows)


# ---------------------------------------------------------------------------
# score-grid


def _cmd_score_grid(args) -> int:
    _apply_config(args, {"counts", "pis", "pfer_method", "pfer_max", "out"})
    props, labels = io.read_counts_csv(args.counts)
    grid = CalibrationGrid.from_proportions(props, build_pi_grid(args.pis))
    surface = score_surface(props, grid, args.pfer_method,
                            _eta_from_args(args))
    write_surface_tsv(args.out, grid, surface)
    try:
        result = calibrate(surface, grid, props)
        _log(f"argmax: lambda={result.lambda_hat:.6g} pi={result.pi_hat:g} "
             f"selected={result.n_selected}")
    except ValueError as exc:
        _log(f"no feasible cell: {exc}")
    return 0


# ---------------------------------------------------------------------------
# benchmark


def _cmd_benchmark(args) -> int:
    allowed = {f.name for f in fields(BenchmarkConfig)}
    _apply_config(args, allowed)
    data = {}
    for f in fields(BenchmarkConfig):
        if hasattr(args, f.name) and getattr(args, f.name) is not None:
            data[f.name] = getattr(args, f.name)
    if isinstance(data.get("methods"), str):
        data["methods"] = tuple(data["methods"].split(","))
    if isinstance(data.get("blocks"), str):
        data["blocks"] = _parse_int_list(data["blocks"])
    try:
        cfg = BenchmarkConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))

    def progress(done, total):
        _log(f"benchmark: dataset {done}/{total} done")

    rows, timings = run_benchmark(cfg, progress=progress)
    io.write_tsv(f"{cfg.out}_rows.tsv", ROW_HEADER,
                 [r.tsv_cells() for r in rows])
    io.write_json(f"{cfg.out}_summary.json", summarize(rows))
    io.write_json(f"{cfg.out}_timings.json", {
        "note": "wall times are machine-dependent and kept out of the "
                "deterministic tables",
        "per_dataset": timings,
        "per_row_s": {f"{r.dataset}:{r.method}:{r.part}": r.wall_time_s
                      for r in rows if r.wall_time_s is not None},
    })
    _log(f"wrote {cfg.out}_rows.tsv ({len(rows)} rows), summary and timings")
    return 0


# ---------------------------------------------------------------------------
# parser


def _parse_int_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got "
                         f"{text!r}")


def _add_calibration_flags(p: _Parser, default_L: int):
    p.add_argument("--data", required=True, help="input data CSV")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--lambdas", type=int, default=default_L,
                   help="penalty grid size")
    p.add_argument("--pis", type=int, default=31, help="threshold grid size")
    p.add_argument("--k", type=int, default=100, help="resampling iterations")
    p.add_argument("--scheme", default="complementary_pairs",
                   choices=("complementary_pairs", "subsample", "bootstrap"))
    p.add_argument("--tau", type=float, default=0.5,
                   help="subsample fraction")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--pfer-method", dest="pfer_method", default="MB",
                   choices=("MB", "SS"))
    p.add_argument("--pfer-max", dest="pfer_max", default=None,
                   help="error budget eta ('inf' or omitted: unconstrained)")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker cap, 0 = auto (default ${THREADS_ENV} or 1)")
    p.add_argument("--config", default=None,
                   help="JSON config overriding flags")


def build_parser() -> _Parser:
    parser = _Parser(prog="stabsel",
                     description="Stability-selection calibration via the "
                                 "stability score")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate benchmark datasets")
    sim_sub = sim.add_subparsers(dest="sim_kind", required=True)

    sg = sim_sub.add_parser("graph", help="graphical-model dataset")
    sg.add_argument("--p", type=int, default=100)
    sg.add_argument("--n", type=int, default=200)
    sg.add_argument("--nu", type=float, default=0.02)
    sg.add_argument("--topology", default="er", choices=("er", "ba"))
    sg.add_argument("--blocks", default=None,
                    help="group sizes, e.g. 50,50")
    sg.add_argument("--vb", type=float, default=1.0)
    sg.add_argument("--seed", type=int, default=0)
    sg.add_argument("--out", required=True)
    sg.add_argument("--config", default=None)
    sg.set_defaults(func=_cmd_simulate_graph)

    sr = sim_sub.add_parser("regression", help="linear-regression dataset")
    sr.add_argument("--n", type=int, default=100)
    sr.add_argument("--p", type=int, default=50)
    sr.add_argument("--signals", type=int, default=10)
    sr.add_argument("--ev", type=float, default=0.6)
    sr.add_argument("--seed", type=int, default=0)
    sr.add_argument("--out", required=True)
    sr.add_argument("--config", default=None)
    sr.set_defaults(func=_cmd_simulate_regression)

    cal = sub.add_parser("calibrate", help="run a calibrated model")
    cal_sub = cal.add_subparsers(dest="cal_kind", required=True)

    cl = cal_sub.add_parser("lasso", help="penalized regression")
    _add_calibration_flags(cl, 50)
    cl.set_defaults(func=_cmd_calibrate_lasso)

    cg = cal_sub.add_parser("glasso", help="graphical model")
    _add_calibration_flags(cg, 50)
    cg.set_defaults(func=_cmd_calibrate_glasso)

    cm = cal_sub.add_parser("multiblock", help="multi-block graphical model")
    _add_calibration_flags(cm, 30)
    cm.add_argument("--blocks", required=False, default=None,
                    help="group sizes, e.g. 50,50")
    cm.add_argument("--lambda0", type=float, default=0.1,
                    help="weak penalty on the other blocks")
    cm.add_argument("--joint", action="store_true",
                    help="joint multi-parameter calibration")
    cm.set_defaults(func=_cmd_calibrate_multiblock)

    sgrid = sub.add_parser("score-grid",
                           help="recompute a score surface from saved counts")
    sgrid.add_argument("--counts", required=True)
    sgrid.add_argument("--pis", type=int, default=31)
    sgrid.add_argument("--pfer-method", dest="pfer_method", default="MB",
                       choices=("MB", "SS"))
    sgrid.add_argument("--pfer-max", dest="pfer_max", default=None)
    sgrid.add_argument("--out", required=True)
    sgrid.add_argument("--config", default=None)
    sgrid.set_defaults(func=_cmd_score_grid)

    bm = sub.add_parser("benchmark", help="multi-dataset method comparison")
    bm.add_argument("--config", default=None)
    bm.add_argument("--task", default=None,
                    choices=("glasso", "regression", "multiblock"))
    bm.add_argument("--n-datasets", dest="n_datasets", type=int, default=None)
    bm.add_argument("--n", type=int, default=None)
    bm.add_argument("--p", type=int, default=None)
    bm.add_argument("--nu", type=float, default=None)
    bm.add_argument("--topology", default=None,
                    choices=("erdos_renyi", "scale_free"))
    bm.add_argument("--blocks", default=None)
    bm.add_argument("--vb", type=float, default=None)
    bm.add_argument("--k", type=int, default=None)
    bm.add_argument("--scheme", default=None)
    bm.add_argument("--lambdas", type=int, default=None)
    bm.add_argument("--lambdas-joint", dest="lambdas_joint", type=int,
                    default=None)
    bm.add_argument("--pis", type=int, default=None)
    bm.add_argument("--seed", type=int, default=None)
    bm.add_argument("--methods", default=None,
                    help="comma-separated method specs")
    bm.add_argument("--threads", type=int, default=None)
    bm.add_argument("--out", default=None)
    bm.set_defaults(func=_cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None) is None and \
                hasattr(args, "threads"):
            args.threads = _default_threads()
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
