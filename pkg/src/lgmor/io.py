"""Plain-text dumps: grids, sparse matrices, solutions, eigenvalues, fields, greedy logs."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .grid import FineGrid


def _path(p) -> Path:
    p = Path(p)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def dump_grid(grid: FineGrid, path) -> Path:
    p = _path(path)
    with open(p, "w") as fh:
        for k, (x1, x2) in enumerate(grid.nodes):
            fh.write(f"node,{k},{x1:.17g},{x2:.17g}\n")
        for k, (a, b, c) in enumerate(grid.elements):
            fh.write(f"tri,{k},{a},{b},{c}\n")
    return p


def load_grid_dump(path):
    nodes, tris = [], []
    for line in Path(path).read_text().splitlines():
        kind, *vals = line.split(",")
        if kind == "node":
            nodes.append([float(v) for v in vals[1:]])
        elif kind == "tri":
            tris.append([int(v) for v in vals[1:]])
    return np.array(nodes), np.array(tris, dtype=np.int64)


def dump_matrix(A, path) -> Path:
    """Coordinate triplets 'i j value' after a 'rows cols nnz' header."""
    A = sp.coo_matrix(A)
    A.sum_duplicates()
    p = _path(path)
    with open(p, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {v:.17g}\n")
    return p


def load_matrix(path) -> sp.csr_matrix:
    with open(path) as fh:
        rows, cols, nnz = (int(t) for t in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(rows, cols)).tocsr()


def dump_values(values, path) -> Path:
    p = _path(path)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "value"])
        for k, v in enumerate(np.asarray(values, dtype=float)):
            w.writerow([k, repr(float(v))])
    return p


def load_values(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[np.argsort(data[:, 0]), 1]


def dump_solution(triple, directory, prefix: str = "") -> list[Path]:
    d = Path(directory)
    return [dump_values(triple.u, d / f"{prefix}u.csv"),
            dump_values(triple.f, d / f"{prefix}f.csv"),
            dump_values(triple.lam, d / f"{prefix}lambda.csv")]


def dump_eigenvalues(space_eigenvalues, path) -> Path:
    """Per-neighborhood local eigenvalues as 'i,ell,lambda'."""
    p = _path(path)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "ell", "lambda"])
        for i, vals in enumerate(space_eigenvalues):
            for ell, lam in enumerate(vals):
                w.writerow([i, ell, repr(float(lam))])
    return p


def dump_field(grid: FineGrid, values, path) -> Path:
    """Nodal field as 'i,j,value' with (i, j) the lattice position."""
    v = np.asarray(values, dtype=float)
    i = np.arange(grid.n_nodes) % (grid.nx + 1)
    j = np.arange(grid.n_nodes) // (grid.nx + 1)
    p = _path(path)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "value"])
        for a, b, c in zip(i, j, v):
            w.writerow([a, b, repr(float(c))])
    return p


def dump_selection_log(records, path) -> Path:
    """Greedy log 'iter,mu_1..mu_m,eps_N,delta_state,delta_adjoint,delta_gradient'."""
    p = _path(path)
    m = len(np.atleast_1d(records[0]["mu"])) if records else 1
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter"] + [f"mu_{k + 1}" for k in range(m)] + ["eps_N", "delta_state",
                                                                   "delta_adjoint", "delta_gradient"])
        for r in records:
            w.writerow([r["iter"]] + [repr(float(x)) for x in np.atleast_1d(r["mu"])]
                       + [repr(float(r["eps"]))] + [repr(float(c)) for c in r["components"]])
    return p


def write_table(rows: list[dict], path) -> Path:
    p = _path(path)
    keys = list(rows[0]) if rows else []
    with open(p, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})
    return p
