"""Generalized multiscale FEM: local spectral bases and the locally reduced KKT system.

For every coarse node the neighborhood omega_i (union of the adjacent coarse
cells) gets a harmonic snapshot space, a generalized eigenproblem on the
snapshot span selects the smoothest modes, and the coarse hat chi_i pastes
them into a global conforming space V_lr.  State and adjoint share V_lr;
the control is never reduced at this stage.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (AffineOperatorFamily, KktBlocks, assemble_state_mass,
                       assemble_stiffness)
from .errors import DegenerateBasis, InvalidArgument, SolverFailure
from .fullorder import OptimalTriple, cost, saddle_matrix
from .grid import (CoarseGrid, FineGrid, PartitionOfUnity, partition_of_unity,
                   pou_gradient_weight)


@dataclass(frozen=True)
class SnapshotSpace:
    index: int
    nodes: np.ndarray = field(repr=False)       # fine node ids of omega_i
    boundary: np.ndarray = field(repr=False)    # local positions of the boundary nodes
    elements: np.ndarray = field(repr=False)
    R_snap: np.ndarray = field(repr=False)      # (n_local, l_i)
    stiffness: sp.csr_matrix = field(repr=False)  # local kappa-stiffness on omega_i

    @property
    def size(self) -> int:
        return self.R_snap.shape[1]


@dataclass(frozen=True)
class LocalBasis:
    index: int
    nodes: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    vectors: np.ndarray = field(repr=False)     # (n_local, M_i), fine nodal on omega_i


def harmonic_snapshots(grid: FineGrid, coarse: CoarseGrid, i: int, kappa) -> SnapshotSpace:
    """Discrete kappa-harmonic extensions of every boundary delta of omega_i."""
    elems = coarse.neighborhoods[i]
    nodes = coarse.neighborhood_nodes(grid, i)
    bnodes = coarse.neighborhood_boundary(grid, i)
    A = assemble_stiffness(grid, kappa, elements=elems)[nodes][:, nodes].tocsc()
    is_bd = np.isin(nodes, bnodes)
    b_loc, i_loc = np.flatnonzero(is_bd), np.flatnonzero(~is_bd)

    R = np.zeros((nodes.size, b_loc.size))
    R[b_loc, np.arange(b_loc.size)] = 1.0
    if i_loc.size:
        A_II = A[i_loc][:, i_loc].tocsc()
        A_IB = A[i_loc][:, b_loc].toarray()
        try:
            R[i_loc] = -spla.splu(A_II).solve(A_IB)
        except RuntimeError as exc:
            raise SolverFailure(f"singular local problem on neighborhood {i}") from exc
    return SnapshotSpace(i, nodes, b_loc, elems, R, A.tocsr())


def _scalar_kappa(kappa, n_elements):
    k = np.asarray(kappa, dtype=float)
    if k.ndim == 0:
        return np.full(n_elements, float(k))
    if k.shape == (n_elements,):
        return k
    if k.shape == (n_elements, 3):
        return 0.5 * (k[:, 0] + k[:, 2])
    if k.shape == (n_elements, 2, 2):
        return 0.5 * (k[:, 0, 0] + k[:, 1, 1])
    raise InvalidArgument(f"bad coefficient shape {k.shape}")


def local_spectral_basis(grid: FineGrid, snap: SnapshotSpace, kappa, n_basis: int,
                         weight=None) -> LocalBasis:
    """Lowest ``n_basis`` modes of A_lr v = lambda S_lr v on the snapshot span.

    ``weight`` multiplies kappa in the mass-type matrix (the kappa-tilde
    factor sum_i H^2 |grad chi_i|^2); ``None`` uses kappa alone.
    """
    if n_basis < 1 or n_basis > snap.size:
        raise InvalidArgument(f"requested {n_basis} modes from {snap.size} snapshots")
    ks = _scalar_kappa(kappa, grid.n_elements)
    w = ks if weight is None else ks * np.asarray(weight, dtype=float)
    S = assemble_state_mass(grid, w, elements=snap.elements)[snap.nodes][:, snap.nodes]
    R = snap.R_snap
    A_lr = R.T @ (snap.stiffness @ R)
    S_lr = R.T @ (S @ R)
    A_lr = 0.5 * (A_lr + A_lr.T)
    S_lr = 0.5 * (S_lr + S_lr.T)
    vals, vecs = sla.eigh(A_lr, S_lr, subset_by_index=[0, n_basis - 1])
    return LocalBasis(snap.index, snap.nodes, vals, R @ vecs)


@dataclass(frozen=True)
class MultiscaleSpace:
    """Pasted basis R^l restricted to the state dofs (columns = basis functions)."""

    R: sp.csc_matrix = field(repr=False)     # (n_state, M)
    owners: np.ndarray = field(repr=False)   # (M, 2): neighborhood i, mode ell
    eigenvalues: tuple = field(repr=False)   # per neighborhood
    state_dofs: np.ndarray = field(repr=False)
    dropped: int = 0

    @property
    def M(self) -> int:
        return self.R.shape[1]


def multiscale_space(grid: FineGrid, locals_: list[LocalBasis], pou: PartitionOfUnity,
                     state_dofs: np.ndarray | None = None, tol: float = 1e-10) -> MultiscaleSpace:
    if not locals_:
        raise DegenerateBasis("no local bases")
    state_dofs = np.arange(grid.n_nodes) if state_dofs is None else np.asarray(state_dofs)
    rows, cols, vals, owners = [], [], [], []
    col = 0
    chi = pou.chi.tocsc()
    for lb in locals_:
        c = chi[:, lb.index].toarray().ravel()[lb.nodes]
        for ell in range(lb.vectors.shape[1]):
            v = c * lb.vectors[:, ell]
            nz = np.flatnonzero(v)
            rows.append(lb.nodes[nz])
            cols.append(np.full(nz.size, col))
            vals.append(v[nz])
            owners.append((lb.index, ell))
            col += 1
    full = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(grid.n_nodes, col)).tocsr()
    R = full[state_dofs].tocsc()

    dense = R.toarray()
    norms = np.linalg.norm(dense, axis=0)
    nonzero = norms > 0
    keep = np.zeros(col, dtype=bool)
    if np.any(nonzero):
        idx = np.flatnonzero(nonzero)
        _, r, piv = sla.qr(dense[:, idx] / norms[idx], mode="economic", pivoting=True)
        d = np.abs(np.diag(r))
        rank = int(np.sum(d > tol * d[0]))
        keep[idx[np.sort(piv[:rank])]] = True
    if not np.any(keep):
        raise DegenerateBasis("all multiscale basis functions vanish on the state dofs")
    return MultiscaleSpace(R[:, np.flatnonzero(keep)], np.asarray(owners)[keep],
                           tuple(lb.eigenvalues for lb in locals_), state_dofs,
                           int(col - keep.sum()))


def build_multiscale_space(grid: FineGrid, coarse: CoarseGrid, kappa, n_basis: int,
                           state_dofs=None, ktilde: bool = True) -> MultiscaleSpace:
    """Snapshots, local eigenproblems and pasting for every coarse node."""
    pou = partition_of_unity(coarse, grid)
    weight = pou_gradient_weight(coarse, grid, pou) if ktilde else None
    locals_ = []
    for i in range(coarse.n_nodes):
        snap = harmonic_snapshots(grid, coarse, i, kappa)
        locals_.append(local_spectral_basis(grid, snap, kappa, min(n_basis, snap.size), weight))
    return multiscale_space(grid, locals_, pou, state_dofs)


def identity_space(blocks: KktBlocks) -> MultiscaleSpace:
    n = blocks.n_state
    return MultiscaleSpace(sp.identity(n, format="csc"), np.zeros((n, 2), dtype=int), (),
                           blocks.state_dofs)


# ---------------------------------------------------------------- local model

@dataclass(frozen=True)
class LocalSolution:
    mu: np.ndarray
    u: np.ndarray       # coefficients in V_lr
    f: np.ndarray       # control dofs (unreduced)
    lam: np.ndarray
    fine: OptimalTriple


@dataclass(frozen=True)
class LocalKkt:
    matrix: sp.csc_matrix = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    parts: dict = field(repr=False)
    mu: np.ndarray = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _is_diagonal(A) -> bool:
    A = sp.csr_matrix(A)
    return A.nnz == np.count_nonzero(A.diagonal()) and (A - sp.diags(A.diagonal())).nnz == 0


class LocalModel:
    """KKT system projected onto V_lr for state and adjoint (control untouched)."""

    def __init__(self, blocks: KktBlocks, space: MultiscaleSpace):
        if blocks.n_state != space.R.shape[0]:
            raise InvalidArgument("multiscale space does not match the state dofs")
        self.blocks = blocks
        self.space = space
        R = space.R
        Rt = R.T.tocsr()

        def proj(A):
            return np.asarray((Rt @ (A @ R)).todense()) if sp.issparse(A) else Rt @ (A @ R)

        self.stiffness = blocks.stiffness.map(proj)
        self.state_mass = blocks.state_mass.map(proj)
        self.coupling = blocks.coupling.map(lambda C: np.asarray((Rt @ C).todense())
                                            if sp.issparse(C) else Rt @ C)
        self.control_mass = blocks.control_mass
        self.target_load = blocks.target_load.map(lambda v: Rt @ v)
        self.lift = blocks.lift.map(lambda v: Rt @ v)
        self.beta = blocks.beta
        self._diag_mc = all(_is_diagonal(P) for P in self.control_mass.pieces)
        self._schur_cache = None
        if self.control_mass.Q == 1 and self.coupling.Q == 1:
            self._schur_cache = self._schur(self.control_mass.pieces[0], self.coupling.pieces[0])

    @property
    def M(self) -> int:
        return self.space.M

    @property
    def n_control(self) -> int:
        return self.control_mass.shape[0]

    def _mc_solve(self, Mc, B):
        if self._diag_mc:
            return B / Mc.diagonal()[:, None]
        return spla.splu(sp.csc_matrix(Mc)).solve(np.asarray(B))

    def _schur(self, Mc, C):
        return C @ self._mc_solve(Mc, C.T)

    def parts(self, mu) -> dict:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return dict(K=self.stiffness.evaluate(mu), M3=self.state_mass.evaluate(mu),
                    Mc=self.control_mass.evaluate(mu), C=self.coupling.evaluate(mu),
                    U=self.target_load.evaluate(mu), d=self.lift.evaluate(mu))

    def system(self, mu) -> LocalKkt:
        """Assembled (N_c + 2M) saddle matrix; used for checks, not for solving."""
        p = self.parts(mu)
        C = sp.csr_matrix(p["C"])
        A = saddle_matrix(self.beta, sp.csr_matrix(p["Mc"]), C, sp.csr_matrix(p["M3"]),
                          sp.csr_matrix(p["K"]))
        rhs = np.concatenate([np.zeros(self.n_control), p["U"], p["d"]])
        return LocalKkt(A, rhs, p, np.atleast_1d(np.asarray(mu, dtype=float)))

    def solve(self, mu) -> LocalSolution:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        p = self.parts(mu)
        if self._schur_cache is not None:
            tc = self.coupling.theta(mu)[0]
            tm = self.control_mass.theta(mu)[0]
            S = (tc * tc / tm) * self._schur_cache
        else:
            S = self._schur(p["Mc"], p["C"])
        S = S / (2.0 * self.beta)
        M = self.M
        A = np.block([[p["M3"], p["K"].T], [p["K"], -S]])
        b = np.concatenate([p["U"], p["d"]])
        try:
            x = sla.solve(0.5 * (A + A.T), b, assume_a="sym")
        except (sla.LinAlgError, ValueError) as exc:
            raise SolverFailure(f"local KKT solve failed at mu={mu}: {exc}") from exc
        u, lam = x[:M], x[M:]
        f = self._mc_solve(p["Mc"], (p["C"].T @ lam)[:, None]).ravel() / (2.0 * self.beta)
        return LocalSolution(mu, u, f, lam, self.downscale(mu, u, f, lam))

    def downscale(self, mu, u, f, lam) -> OptimalTriple:
        b = self.blocks
        u_full = b.extend(self.space.R @ u, mu=mu)
        lam_full = b.extend(self.space.R @ lam, homogeneous=True)
        J = cost(u_full, f, b.target.evaluate(mu), self.beta, b.full_state_mass.evaluate(mu),
                 b.control_mass.evaluate(mu))
        return OptimalTriple(u_full, f, lam_full, J)

    def residual(self, sol: LocalSolution) -> np.ndarray:
        """Block residual norms of the local system at a local solution."""
        p = self.parts(sol.mu)
        r1 = 2 * self.beta * (p["Mc"] @ sol.f) - p["C"].T @ sol.lam
        r2 = p["M3"] @ sol.u + p["K"].T @ sol.lam - p["U"]
        r3 = -(p["C"] @ sol.f) + p["K"] @ sol.u - p["d"]
        return np.array([np.linalg.norm(r1), np.linalg.norm(r2), np.linalg.norm(r3)])

    def inner_product(self, mu_ref) -> np.ndarray:
        """mu-independent H1-type inner product on V_lr: stiffness(mu_ref) + mass."""
        X = self.stiffness.evaluate(mu_ref) + self.state_mass.evaluate(mu_ref)
        return 0.5 * (X + X.T)


def project_kkt_local(blocks: KktBlocks, space: MultiscaleSpace) -> LocalModel:
    return LocalModel(blocks, space)


def solve_local_kkt(model: LocalModel, mu) -> LocalSolution:
    return model.solve(mu)
