"""File formats: CSV for matrices, TSV for surfaces and benchmark tables,
JSON for configs and results. Floats are written with 17 significant digits
so every artifact round-trips losslessly."""

from __future__ import annotations

import json

import numpy as np

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


def write_matrix_csv(path, values: np.ndarray, column_names):
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if values.shape[1] != len(column_names):
        raise ValueError("column names do not match matrix width")
    with open(path, "w") as fh:
        fh.write(",".join(column_names) + "\n")
        for row in values:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def read_matrix_csv(path):
    with open(path) as fh:
        names = fh.readline().strip().split(",")
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    if values.shape[1] != len(names):
        raise ValueError(f"{path}: header and data width differ")
    return values, names


def write_edge_list_csv(path, edge_names):
    """Edges as ordered pairs of feature names (i before j by column)."""
    with open(path, "w") as fh:
        fh.write("i,j\n")
        for a, b in edge_names:
            fh.write(f"{a},{b}\n")


def read_edge_list_csv(path):
    edges = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "i,j":
            raise ValueError(f"{path}: expected edge-list header 'i,j'")
        for line in fh:
            line = line.strip()
            if line:
                a, b = line.split(",")
                edges.append((a, b))
    return edges


def write_beta_csv(path, feature_names, beta):
    with open(path, "w") as fh:
        fh.write("feature,beta\n")
        for name, b in zip(feature_names, beta):
            fh.write(f"{name},{FLOAT_FMT % b}\n")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_counts_csv(path, props, feature_labels):
    """Selection counts with their penalty grid; self-contained so the score
    surface can be recomputed without redoing the resampling."""
    L, N = props.counts.shape
    if len(feature_labels) != N:
        raise ValueError("feature labels do not match count width")
    with open(path, "w") as fh:
        fh.write("lambda,q,k_effective,kind," +
                 ",".join(feature_labels) + "\n")
        for l in range(L):
            head = [FLOAT_FMT % props.lambdas[l], FLOAT_FMT % props.q[l],
                    str(props.K_effective), props.kind]
            fh.write(",".join(head + [str(c) for c in props.counts[l]]) + "\n")


def read_counts_csv(path):
    from .resampling import SelectionProportionArray

    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:4] != ["lambda", "q", "k_effective", "kind"]:
            raise ValueError(f"{path}: not a counts file")
        labels = header[4:]
        lambdas, qs, counts, kinds, ks = [], [], [], set(), set()
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != 4 + len(labels):
                raise ValueError(f"{path}: ragged row")
            lambdas.append(float(parts[0]))
            qs.append(float(parts[1]))
            ks.add(int(parts[2]))
            kinds.add(parts[3])
            counts.append([int(c) for c in parts[4:]])
    if len(ks) != 1 or len(kinds) != 1:
        raise ValueError(f"{path}: inconsistent k_effective or kind")
    props = SelectionProportionArray(
        counts=np.array(counts, dtype=np.int32),
        K_effective=ks.pop(),
        lambdas=np.array(lambdas),
        q=np.array(qs),
        kind=kinds.pop(),
    )
    return props, labels


def write_tsv(path, header, rows):
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(fmt(v) for v in row) + "\n")
