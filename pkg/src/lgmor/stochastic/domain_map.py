"""Harmonic map from the reference square E onto a domain with a rough bottom.

The physical domain is {0 <= x1 <= 1, s(x1) <= x2 <= 1}.  Both physical
coordinates are discrete harmonic functions of the reference coordinates
(xi1, xi2).  Boundary data: x1 = xi1 everywhere (so x1 == xi1 inside too),
x2 = s(xi1) on the bottom, 1 on the top and the straight segment
s(end) + xi2 (1 - s(end)) on either side.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from ..assembly import assemble_stiffness, p1_gradients
from ..errors import InvalidArgument, InvalidGeometry
from ..grid import FineGrid
from .kl import KlField


@dataclass(frozen=True)
class DomainMap:
    grid: FineGrid = field(repr=False)
    coords: np.ndarray = field(repr=False)     # (N_h, 2) physical node positions
    jacobian: np.ndarray = field(repr=False)   # (N_e, 2, 2), d x_a / d xi_b
    det: np.ndarray = field(repr=False)

    def physical_centroids(self) -> np.ndarray:
        return self.coords[self.grid.elements].mean(axis=1)


def _bottom_nodes(grid: FineGrid) -> np.ndarray:
    return grid.node_id(np.arange(grid.nx + 1), 0)


def _x2_boundary_data(grid: FineGrid, s_bottom: np.ndarray, top: float = 1.0) -> np.ndarray:
    """Nodal vector holding the x2 boundary data (zero in the interior)."""
    xi = grid.nodes
    g = np.zeros(grid.n_nodes)
    B = grid.boundary
    x1, x2 = xi[B, 0], xi[B, 1]
    s_left, s_right = s_bottom[0], s_bottom[-1]
    g[B] = np.where(np.isclose(x1, 0.0), s_left + x2 * (top - s_left),
                    np.where(np.isclose(x1, 1.0), s_right + x2 * (top - s_right), top * x2))
    g[_bottom_nodes(grid)] = s_bottom
    return g


class _Laplace:
    """Cached factorization of the interior Laplacian on E."""

    def __init__(self, grid: FineGrid):
        K = assemble_stiffness(grid, 1.0)
        I, B = grid.interior, grid.boundary
        self.grid = grid
        self.K_IB = K[I][:, B]
        self.lu = spla.splu(K[I][:, I].tocsc())

    def extend(self, g: np.ndarray) -> np.ndarray:
        out = np.array(g, dtype=float)
        I, B = self.grid.interior, self.grid.boundary
        rhs = -(self.K_IB @ np.asarray(g)[B])
        out[I] = self.lu.solve(rhs) if rhs.ndim == 1 else self.lu.solve(np.asarray(rhs))
        return out


def jacobians(grid: FineGrid, coords: np.ndarray, elements=None):
    grads, _ = p1_gradients(grid)
    conn = grid.elements
    if elements is not None:
        grads, conn = grads[elements], conn[elements]
    J = np.einsum("eka,ekb->eab", coords[conn], grads)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    return J, det


def _check(det):
    bad = np.flatnonzero(det <= 0.0)
    if bad.size:
        raise InvalidGeometry(f"folded map: non-positive Jacobian on element {bad[0]}", element=int(bad[0]))


def stochastic_map(s, grid: FineGrid, check: bool = True) -> DomainMap:
    """Build the map for bottom data ``s`` (nodal values along the bottom or a callable)."""
    xb = grid.nodes[_bottom_nodes(grid), 0]
    s_b = np.asarray(s(xb) if callable(s) else s, dtype=float)
    if s_b.shape != xb.shape:
        raise InvalidArgument(f"bottom data needs {xb.size} values, got {s_b.shape}")
    if np.any(s_b >= 1.0):
        raise InvalidGeometry("bottom boundary reaches the top")
    x2 = _Laplace(grid).extend(_x2_boundary_data(grid, s_b))
    coords = np.column_stack([grid.nodes[:, 0], x2])
    J, det = jacobians(grid, coords)
    if check:
        _check(det)
    return DomainMap(grid, coords, J, det)


def pullback_tensor(J: np.ndarray, det: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """kappa |det J| J^{-1} J^{-T} per element, via the adjugate."""
    adj = np.empty_like(J)
    adj[:, 0, 0], adj[:, 1, 1] = J[:, 1, 1], J[:, 0, 0]
    adj[:, 0, 1], adj[:, 1, 0] = -J[:, 0, 1], -J[:, 1, 0]
    return (np.asarray(kappa)[:, None, None] / np.abs(det)[:, None, None]) \
        * np.einsum("eab,ecb->eac", adj, adj)


def transform_coefficients(dmap: DomainMap, kappa) -> np.ndarray:
    """Diffusion tensor on E; ``kappa`` is a scalar, per-element values or a callable of points."""
    _check(dmap.det)
    if callable(kappa):
        k = np.asarray(kappa(dmap.physical_centroids()), dtype=float)
    else:
        k = np.broadcast_to(np.asarray(kappa, dtype=float), dmap.det.shape)
    return pullback_tensor(dmap.jacobian, dmap.det, k)


class AffineMap:
    """The map as an affine function of the KL coordinates: x2 = X0 + H xi."""

    def __init__(self, grid: FineGrid, kl: KlField):
        self.grid = grid
        self.kl = kl
        lap = _Laplace(grid)
        xb = grid.nodes[_bottom_nodes(grid), 0]
        modes = kl.scaled_modes(xb)                      # (nx+1, n_terms)
        self.X0 = lap.extend(_x2_boundary_data(grid, np.zeros_like(xb)))
        # boundary data of each coordinate direction has top value 0
        self.H = np.column_stack([lap.extend(_x2_boundary_data(grid, modes[:, n], top=0.0))
                                  for n in range(kl.n_terms)])
        self.grads, _ = p1_gradients(grid)

    @property
    def n_terms(self) -> int:
        return self.kl.n_terms

    def x2(self, xi, nodes=None) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if nodes is None:
            return self.X0 + self.H @ xi
        return self.X0[nodes] + self.H[nodes] @ xi

    def coords(self, xi) -> np.ndarray:
        return np.column_stack([self.grid.nodes[:, 0], self.x2(xi)])

    def element_geometry(self, xi, elements=None):
        """Jacobians, determinants and physical centroids on (a subset of) elements."""
        conn = self.grid.elements if elements is None else self.grid.elements[elements]
        grads = self.grads if elements is None else self.grads[elements]
        x1 = self.grid.nodes[conn, 0]
        x2 = self.x2(xi, conn.ravel()).reshape(conn.shape)
        J = np.empty((conn.shape[0], 2, 2))
        J[:, 0] = np.einsum("ek,ekb->eb", x1, grads)
        J[:, 1] = np.einsum("ek,ekb->eb", x2, grads)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        cent = np.column_stack([x1.mean(axis=1), x2.mean(axis=1)])
        return J, det, cent

    def domain_map(self, xi, check: bool = True) -> DomainMap:
        coords = self.coords(xi)
        J, det, _ = self.element_geometry(xi)
        if check:
            _check(det)
        return DomainMap(self.grid, coords, J, det)
