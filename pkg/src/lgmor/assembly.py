"""P1/P0 finite element assembly, affine operator families and KKT blocks.

State and adjoint live in continuous P1 on the fine triangulation, the
distributed control in piecewise constants (one value per element).  All
element integrals are closed form; variable coefficients are sampled once
per element.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument, InvalidCoefficient, OutOfDomain
from .grid import FineGrid

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def p1_gradients(grid: FineGrid, nodes: np.ndarray | None = None):
    """Barycentric gradients (N_e, 3, 2) and signed areas (N_e,)."""
    p = grid.nodes if nodes is None else nodes
    x = p[grid.elements]                              # (N_e, 3, 2)
    d1 = x[:, 1] - x[:, 0]
    d2 = x[:, 2] - x[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # rows of inv(B)^T with B = [d1 d2] give grad(lambda_1), grad(lambda_2)
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    return grads, 0.5 * det


def _as_tensor(kappa, n_elements: int) -> np.ndarray:
    k = np.asarray(kappa, dtype=float)
    if k.ndim == 0:
        k = np.full(n_elements, float(k))
    if k.shape == (n_elements,):
        t = np.zeros((n_elements, 2, 2))
        t[:, 0, 0] = t[:, 1, 1] = k
        return t
    if k.shape == (n_elements, 3):                 # packed (k11, k12, k22)
        t = np.empty((n_elements, 2, 2))
        t[:, 0, 0], t[:, 0, 1], t[:, 1, 0], t[:, 1, 1] = k[:, 0], k[:, 1], k[:, 1], k[:, 2]
        return t
    if k.shape == (n_elements, 2, 2):
        return k
    raise InvalidArgument(f"coefficient of shape {k.shape} does not match {n_elements} elements")


def _scatter(grid: FineGrid, local: np.ndarray, elements: np.ndarray | None) -> sp.csr_matrix:
    conn = grid.elements if elements is None else grid.elements[elements]
    rows = np.repeat(conn, 3, axis=1).ravel()
    cols = np.tile(conn, (1, 3)).ravel()
    n = grid.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(grid: FineGrid, kappa, *, elements=None, nodes=None,
                       check: bool = True) -> sp.csr_matrix:
    """Stiffness matrix of -div(kappa grad u).

    ``kappa`` is a scalar, a per-element array, or per-element 2x2 tensors
    (``(N_e, 2, 2)`` or packed ``(N_e, 3)``).  ``check=False`` admits signed
    coefficients, which affine pieces built by interpolation need.
    """
    tensor = _as_tensor(kappa, grid.n_elements)
    if check:
        ev = np.linalg.eigvalsh(tensor)
        if np.any(ev[:, 0] <= 0.0):
            bad = int(np.argmin(ev[:, 0]))
            raise InvalidCoefficient(f"non-positive diffusion coefficient on element {bad}")
    grads, area = p1_gradients(grid, nodes)
    area = np.abs(area)
    if elements is not None:
        grads, area, tensor = grads[elements], area[elements], tensor[elements]
    local = np.einsum("e,eid,edf,ejf->eij", area, grads, tensor, grads)
    return _scatter(grid, local, elements)


def assemble_state_mass(grid: FineGrid, weight=None, *, elements=None, nodes=None) -> sp.csr_matrix:
    """P1 mass matrix, optionally weighted by a per-element constant."""
    _, area = p1_gradients(grid, nodes)
    w = np.abs(area) if weight is None else np.abs(area) * np.asarray(weight, float)
    if elements is not None:
        w = w[elements]
    local = w[:, None, None] * _MASS_REF[None]
    return _scatter(grid, local, elements)


def assemble_control_mass(grid: FineGrid, weight=None, *, nodes=None) -> sp.dia_matrix:
    _, area = p1_gradients(grid, nodes)
    w = np.abs(area) if weight is None else np.abs(area) * np.asarray(weight, float)
    return sp.diags(w).tocsr()


def assemble_coupling(grid: FineGrid, weight=None, *, nodes=None) -> sp.csr_matrix:
    """(k, j) = integral of psi_k over element j, shape (N_h, N_e)."""
    _, area = p1_gradients(grid, nodes)
    w = np.abs(area) if weight is None else np.abs(area) * np.asarray(weight, float)
    rows = grid.elements.ravel()
    cols = np.repeat(np.arange(grid.n_elements), 3)
    vals = np.repeat(w / 3.0, 3)
    return sp.coo_matrix((vals, (rows, cols)), shape=(grid.n_nodes, grid.n_elements)).tocsr()


def assemble_load(grid: FineGrid, values) -> np.ndarray:
    """Exact integrals of a P1 (nodal) or P0 (per-element) field against each psi_k."""
    v = np.asarray(values, dtype=float)
    if v.shape == (grid.n_nodes,):
        return assemble_state_mass(grid) @ v
    if v.shape == (grid.n_elements,):
        return assemble_coupling(grid) @ v
    raise InvalidArgument(
        f"field of length {v.shape} matches neither {grid.n_nodes} nodes nor {grid.n_elements} elements")


def assemble_boundary_mass(grid: FineGrid) -> sp.csr_matrix:
    """1D P1 mass on the boundary, rows ordered by ``grid.boundary_cycle()``."""
    cyc = grid.boundary_cycle()
    nb = cyc.size
    p = grid.nodes[cyc]
    length = np.linalg.norm(p[(np.arange(nb) + 1) % nb] - p, axis=1)   # edge k joins k, k+1
    k = np.arange(nb)
    nxt = (k + 1) % nb
    rows = np.concatenate([k, nxt, k, nxt])
    cols = np.concatenate([k, nxt, nxt, k])
    vals = np.concatenate([length / 3, length / 3, length / 6, length / 6])
    return sp.coo_matrix((vals, (rows, cols)), shape=(nb, nb)).tocsr()


def boundary_trace(grid: FineGrid) -> sp.csr_matrix:
    """Injection (N_h, N_b) from boundary-cycle values to nodal vectors."""
    cyc = grid.boundary_cycle()
    return sp.coo_matrix((np.ones(cyc.size), (cyc, np.arange(cyc.size))),
                         shape=(grid.n_nodes, cyc.size)).tocsr()


# ---------------------------------------------------------------- affine families

def _ones(mu):
    return np.ones(1)


@dataclass(frozen=True)
class AffineOperatorFamily:
    """sum_q theta_q(mu) * pieces[q] for sparse matrices or vectors."""

    pieces: tuple
    coefficients: Callable[[np.ndarray], np.ndarray] = field(default=_ones, repr=False)
    bounds: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if not self.pieces:
            raise InvalidArgument("an affine family needs at least one piece")
        shape = self.pieces[0].shape
        if any(p.shape != shape for p in self.pieces):
            raise InvalidArgument("affine pieces must share dimensions")

    @property
    def Q(self) -> int:
        return len(self.pieces)

    @property
    def shape(self):
        return self.pieces[0].shape

    @property
    def is_vector(self) -> bool:
        return len(self.shape) == 1

    def theta(self, mu) -> np.ndarray:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if self.bounds is not None:
            lo, hi = self.bounds
            if np.any(mu < np.asarray(lo) - 1e-12) or np.any(mu > np.asarray(hi) + 1e-12):
                raise OutOfDomain(f"parameter {mu} outside [{lo}, {hi}]")
        th = np.atleast_1d(np.asarray(self.coefficients(mu), dtype=float))
        if th.shape != (self.Q,):
            raise InvalidArgument(f"coefficient function returned {th.shape}, expected ({self.Q},)")
        return th

    def evaluate(self, mu):
        return combine(self.pieces, self.theta(mu))

    def map(self, fn) -> "AffineOperatorFamily":
        """Apply a linear map to every piece; the coefficients are kept."""
        return replace(self, pieces=tuple(fn(p) for p in self.pieces))

    def scaled(self, c: float) -> "AffineOperatorFamily":
        return replace(self, coefficients=_Scaled(self.coefficients, float(c)))

    @classmethod
    def constant(cls, piece, bounds=None):
        return cls((piece,), _ones, bounds)


def combine(pieces: Sequence, theta: np.ndarray):
    out = theta[0] * pieces[0]
    for t, p in zip(theta[1:], pieces[1:]):
        out = out + t * p
    return out


def affine_evaluate(family: AffineOperatorFamily, mu):
    return family.evaluate(mu)


# Coefficient combinators are small classes (not closures) so that reduced
# models, which keep only the coefficient callables, can be pickled.

@dataclass(frozen=True)
class _Scaled:
    inner: Callable
    c: float

    def __call__(self, mu):
        return self.c * np.atleast_1d(self.inner(mu))


@dataclass(frozen=True)
class _Concat:
    parts: tuple

    def __call__(self, mu):
        return np.concatenate([np.atleast_1d(c(mu)) for c in self.parts])


@dataclass(frozen=True)
class _Outer:
    a: Callable
    b: Callable

    def __call__(self, mu):
        return np.outer(self.a(mu), self.b(mu)).ravel()


def concat_families(*fams: AffineOperatorFamily) -> AffineOperatorFamily:
    bounds = next((f.bounds for f in fams if f.bounds is not None), None)
    pieces = tuple(p for f in fams for p in f.pieces)
    return AffineOperatorFamily(pieces, _Concat(tuple(f.coefficients for f in fams)), bounds)


def product_family(matrices: AffineOperatorFamily, vectors: AffineOperatorFamily,
                   ) -> AffineOperatorFamily:
    """Family of matrix-vector products; coefficients are outer products."""
    pieces = tuple(M @ v for M in matrices.pieces for v in vectors.pieces)
    return AffineOperatorFamily(pieces, _Outer(matrices.coefficients, vectors.coefficients),
                                matrices.bounds or vectors.bounds)


# ---------------------------------------------------------------- KKT blocks

@dataclass(frozen=True)
class KktBlocks:
    """Affine building blocks of the optimality system.

    Matrix families act on the current state unknowns ``state_dofs`` (all
    nodes before Dirichlet elimination).  ``target`` and ``full_state_mass``
    always live on every node and only enter the cost functional.
    """

    grid: FineGrid
    beta: float
    stiffness: AffineOperatorFamily
    state_mass: AffineOperatorFamily
    control_mass: AffineOperatorFamily
    coupling: AffineOperatorFamily
    target: AffineOperatorFamily
    target_load: AffineOperatorFamily
    lift: AffineOperatorFamily
    full_stiffness: AffineOperatorFamily
    full_state_mass: AffineOperatorFamily
    state_dofs: np.ndarray
    boundary_values: np.ndarray | AffineOperatorFamily | None = None
    control: str = "distributed"

    @property
    def n_state(self) -> int:
        return self.state_dofs.size

    @property
    def n_control(self) -> int:
        return self.control_mass.shape[0]

    @property
    def bounds(self):
        return self.stiffness.bounds

    def boundary_at(self, mu=None) -> np.ndarray | None:
        """Dirichlet data as a full nodal vector (``None`` without boundary conditions)."""
        g = self.boundary_values
        if isinstance(g, AffineOperatorFamily):
            if mu is None:
                raise InvalidArgument("parameter-dependent boundary data needs mu")
            return g.evaluate(mu)
        return g

    def extend(self, v: np.ndarray, homogeneous: bool = False, mu=None) -> np.ndarray:
        """Full nodal vector from state-dof values (adds g unless homogeneous)."""
        g = None if homogeneous else self.boundary_at(mu)
        out = np.zeros(self.grid.n_nodes) if g is None else np.array(g, dtype=float)
        out[self.state_dofs] = v
        return out

    def restrict(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v)[self.state_dofs]


def build_blocks(grid: FineGrid, stiffness: AffineOperatorFamily, target: AffineOperatorFamily,
                 beta: float, *, state_mass: AffineOperatorFamily | None = None,
                 control_mass: AffineOperatorFamily | None = None,
                 coupling: AffineOperatorFamily | None = None) -> KktBlocks:
    """Distributed-control blocks on the full node set (no boundary conditions yet)."""
    bounds = stiffness.bounds
    M3 = state_mass or AffineOperatorFamily.constant(assemble_state_mass(grid), bounds)
    M1 = control_mass or AffineOperatorFamily.constant(assemble_control_mass(grid), bounds)
    M2 = coupling or AffineOperatorFamily.constant(assemble_coupling(grid), bounds)
    zero = AffineOperatorFamily.constant(np.zeros(grid.n_nodes), bounds)
    return KktBlocks(grid=grid, beta=float(beta), stiffness=stiffness, state_mass=M3,
                     control_mass=M1, coupling=M2, target=target,
                     target_load=product_family(M3, target), lift=zero,
                     full_stiffness=stiffness, full_state_mass=M3,
                     state_dofs=np.arange(grid.n_nodes))


def build_neumann_blocks(grid: FineGrid, stiffness: AffineOperatorFamily,
                         target: AffineOperatorFamily, source_nodal: np.ndarray,
                         beta: float) -> KktBlocks:
    """Boundary (Neumann) control: the control is a P1 trace on the boundary cycle."""
    bounds = stiffness.bounds
    M3 = AffineOperatorFamily.constant(assemble_state_mass(grid), bounds)
    Mb = assemble_boundary_mass(grid)
    B = (boundary_trace(grid) @ Mb).tocsr()
    src = assemble_load(grid, source_nodal)
    return KktBlocks(grid=grid, beta=float(beta), stiffness=stiffness, state_mass=M3,
                     control_mass=AffineOperatorFamily.constant(Mb, bounds),
                     coupling=AffineOperatorFamily.constant(B, bounds), target=target,
                     target_load=product_family(M3, target),
                     lift=AffineOperatorFamily.constant(src, bounds),
                     full_stiffness=stiffness, full_state_mass=M3,
                     state_dofs=np.arange(grid.n_nodes), control="boundary")


def apply_dirichlet(blocks: KktBlocks, g) -> KktBlocks:
    """Eliminate boundary state/adjoint unknowns with data ``g``.

    ``g`` is a full nodal vector, one value per boundary node (in
    ``grid.boundary`` order) or an affine family of nodal vectors.  The lift
    -K_IB g joins the state equation right-hand side; the boundary mass
    coupling -M3_IB g joins the adjoint one.
    """
    grid = blocks.grid
    if blocks.n_state != grid.n_nodes:
        raise InvalidArgument("boundary conditions were already applied")
    I = grid.interior
    B = grid.boundary
    if isinstance(g, AffineOperatorFamily):
        if g.shape != (grid.n_nodes,):
            raise InvalidArgument("boundary data family must hold full nodal vectors")
        gfam = g.map(lambda v: _on_boundary(v, B))
        gB = gfam.map(lambda v: v[B])
        lift_b = product_family(blocks.stiffness.map(lambda K: -K[I][:, B].tocsr()), gB)
        load_b = product_family(blocks.state_mass.map(lambda M: -M[I][:, B].tocsr()), gB)
        full = gfam
    else:
        g = np.asarray(g, dtype=float)
        full = np.zeros(grid.n_nodes)
        if g.shape == (grid.n_nodes,):
            full[B] = g[B]
        elif g.shape == (B.size,):
            full[B] = g
        else:
            raise InvalidArgument(f"boundary data of length {g.shape} does not cover the boundary nodes")
        gB = full[B]
        lift_b = blocks.stiffness.map(lambda K: -(K[I][:, B] @ gB))
        load_b = blocks.state_mass.map(lambda M: -(M[I][:, B] @ gB))

    lift = concat_families(blocks.lift.map(lambda v: v[I]), lift_b)
    tload = concat_families(blocks.target_load.map(lambda v: v[I]), load_b)
    return replace(blocks, stiffness=blocks.stiffness.map(lambda K: K[I][:, I].tocsr()),
                   state_mass=blocks.state_mass.map(lambda M: M[I][:, I].tocsr()),
                   coupling=blocks.coupling.map(lambda C: C[I].tocsr()),
                   target_load=tload, lift=lift, state_dofs=I, boundary_values=full)


def _on_boundary(v, B):
    out = np.zeros_like(np.asarray(v, dtype=float))
    out[B] = np.asarray(v)[B]
    return out
