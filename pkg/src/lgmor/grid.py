"""Structured fine/coarse triangulations of the unit square.

Nodes are numbered lexicographically with x1 running fastest.  Every square
cell is cut along its (i, j) -> (i+1, j+1) diagonal into two right
triangles, both stored counter-clockwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument


@dataclass(frozen=True)
class FineGrid:
    nx: int
    ny: int
    nodes: np.ndarray = field(repr=False)      # (N_h, 2)
    elements: np.ndarray = field(repr=False)   # (N_e, 3)
    boundary: np.ndarray = field(repr=False)   # sorted node ids on the boundary

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)

    @property
    def h(self) -> tuple[float, float]:
        return 1.0 / self.nx, 1.0 / self.ny

    def node_id(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def element_cells(self) -> np.ndarray:
        """(i, j) cell index of every element, shape (N_e, 2)."""
        cell = np.arange(self.n_elements) // 2
        return np.column_stack([cell % self.nx, cell // self.nx])

    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def signed_areas(self, nodes: np.ndarray | None = None) -> np.ndarray:
        p = self.nodes if nodes is None else nodes
        a, b, c = (p[self.elements[:, k]] for k in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))

    def boundary_cycle(self) -> np.ndarray:
        """Boundary nodes walked counter-clockwise starting at (0, 0)."""
        nx, ny = self.nx, self.ny
        bottom = self.node_id(np.arange(nx), 0)
        right = self.node_id(nx, np.arange(ny))
        top = self.node_id(np.arange(nx, 0, -1), ny)
        left = self.node_id(0, np.arange(ny, 0, -1))
        return np.concatenate([bottom, right, top, left])


def build_fine_grid(nx: int, ny: int) -> FineGrid:
    if int(nx) < 1 or int(ny) < 1:
        raise InvalidArgument(f"cell counts must be >= 1, got ({nx}, {ny})")
    nx, ny = int(nx), int(ny)
    x1, x2 = np.meshgrid(np.linspace(0.0, 1.0, nx + 1), np.linspace(0.0, 1.0, ny + 1))
    nodes = np.column_stack([x1.ravel(), x2.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    n00 = j * (nx + 1) + i
    n10, n01, n11 = n00 + 1, n00 + nx + 1, n00 + nx + 2
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper

    on_bd = (np.isclose(nodes[:, 0], 0.0) | np.isclose(nodes[:, 0], 1.0)
             | np.isclose(nodes[:, 1], 0.0) | np.isclose(nodes[:, 1], 1.0))
    return FineGrid(nx, ny, nodes, elements, np.flatnonzero(on_bd))


@dataclass(frozen=True)
class CoarseGrid:
    ncx: int
    ncy: int
    factor: tuple[int, int]
    nodes: np.ndarray = field(repr=False)                   # (N_c, 2)
    neighborhoods: tuple[np.ndarray, ...] = field(repr=False)  # fine element ids of omega_i

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def H(self) -> tuple[float, float]:
        return 1.0 / self.ncx, 1.0 / self.ncy

    def neighborhood_nodes(self, fine: FineGrid, i: int) -> np.ndarray:
        return np.unique(fine.elements[self.neighborhoods[i]])

    def neighborhood_boundary(self, fine: FineGrid, i: int) -> np.ndarray:
        """Fine nodes on the boundary of omega_i (including any part on the domain boundary)."""
        nodes = self.neighborhood_nodes(fine, i)
        lo, hi = self._box(i)
        x = fine.nodes[nodes]
        tol = 1e-12
        on = ((np.abs(x[:, 0] - lo[0]) < tol) | (np.abs(x[:, 0] - hi[0]) < tol)
              | (np.abs(x[:, 1] - lo[1]) < tol) | (np.abs(x[:, 1] - hi[1]) < tol))
        return nodes[on]

    def _box(self, i: int):
        Hx, Hy = self.H
        c = self.nodes[i]
        lo = np.maximum(c - [Hx, Hy], 0.0)
        hi = np.minimum(c + [Hx, Hy], 1.0)
        return lo, hi


def build_coarse_grid(fine: FineGrid, ncx: int, ncy: int) -> CoarseGrid:
    if ncx < 1 or ncy < 1 or fine.nx % ncx or fine.ny % ncy:
        raise InvalidArgument(
            f"coarse grid {ncx}x{ncy} does not nest in fine grid {fine.nx}x{fine.ny}")
    fx, fy = fine.nx // ncx, fine.ny // ncy
    X1, X2 = np.meshgrid(np.linspace(0, 1, ncx + 1), np.linspace(0, 1, ncy + 1))
    nodes = np.column_stack([X1.ravel(), X2.ravel()])

    cells = fine.element_cells()
    ci, cj = cells[:, 0] // fx, cells[:, 1] // fy     # coarse cell of every element
    hoods = []
    for J in range(ncy + 1):
        for I in range(ncx + 1):
            mask = ((ci == I) | (ci == I - 1)) & ((cj == J) | (cj == J - 1))
            hoods.append(np.flatnonzero(mask))
    return CoarseGrid(ncx, ncy, (fx, fy), nodes, tuple(hoods))


@dataclass(frozen=True)
class PartitionOfUnity:
    chi: sp.csc_matrix     # (N_h, N_c); column i holds chi_i at the fine nodes

    def __getitem__(self, i) -> np.ndarray:
        return self.chi[:, i].toarray().ravel()

    @property
    def n_functions(self) -> int:
        return self.chi.shape[1]


def partition_of_unity(coarse: CoarseGrid, fine: FineGrid) -> PartitionOfUnity:
    """Coarse bilinear hat functions sampled at the fine nodes."""
    Hx, Hy = coarse.H
    rows, cols, vals = [], [], []
    for i, c in enumerate(coarse.nodes):
        hx = np.clip(1.0 - np.abs(fine.nodes[:, 0] - c[0]) / Hx, 0.0, None)
        hy = np.clip(1.0 - np.abs(fine.nodes[:, 1] - c[1]) / Hy, 0.0, None)
        v = hx * hy
        nz = np.flatnonzero(v > 0)
        rows.append(nz)
        cols.append(np.full(nz.size, i))
        vals.append(v[nz])
    chi = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(fine.n_nodes, coarse.n_nodes))
    return PartitionOfUnity(chi)


def pou_gradient_weight(coarse: CoarseGrid, fine: FineGrid, pou: PartitionOfUnity) -> np.ndarray:
    """Per-element sum_i H^2 |grad chi_i|^2 of the P1 interpolants of the hats."""
    from .assembly import p1_gradients

    grads, _ = p1_gradients(fine)                  # (N_e, 3, 2)
    H2 = coarse.H[0] * coarse.H[1]
    chi = pou.chi.tocsr()
    out = np.zeros(fine.n_elements)
    for i in range(pou.n_functions):
        vals = chi[:, i].toarray().ravel()[fine.elements]   # (N_e, 3)
        g = np.einsum("ek,ekd->ed", vals, grads)
        out += H2 * np.einsum("ed,ed->e", g, g)
    return out
