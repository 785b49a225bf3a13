"""Truth (fine-grid) optimality system.

The unknowns are ordered (control F, state u, adjoint lambda) and the
system matrix is

    [ 2 beta Mc     0     -C^T ]
    [    0         M3      K^T ]
    [   -C          K       0  ]

with right-hand side (0, U_hat, d).  Row one is the gradient equation, row
two the adjoint equation and row three the state equation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import KktBlocks
from .errors import InvalidArgument, InvalidRegularization, SolverFailure


@dataclass(frozen=True)
class FullKkt:
    matrix: sp.csc_matrix = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    beta: float
    n_control: int
    n_state: int
    mu: np.ndarray
    blocks: KktBlocks = field(repr=False)
    parts: dict = field(repr=False)     # evaluated Mc, C, M3, K, U, d, target, M3_full

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def split(self, x: np.ndarray):
        nc, ns = self.n_control, self.n_state
        return x[:nc], x[nc:nc + ns], x[nc + ns:]


@dataclass(frozen=True)
class OptimalTriple:
    """Optimal state, control and adjoint.

    ``u`` and ``lam`` are full nodal vectors (``u`` carries the Dirichlet
    data, ``lam`` vanishes there); ``f`` lives on the control dofs.
    """

    u: np.ndarray
    f: np.ndarray
    lam: np.ndarray
    J: float


def saddle_matrix(beta, Mc, C, M3, K):
    return sp.bmat([[2.0 * beta * Mc, None, -C.T],
                    [None, M3, K.T],
                    [-C, K, None]], format="csc")


def build_kkt(blocks: KktBlocks, mu, target: np.ndarray | None = None) -> FullKkt:
    if not blocks.beta > 0:
        raise InvalidRegularization(f"beta must be positive, got {blocks.beta}")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    K = blocks.stiffness.evaluate(mu)
    M3 = blocks.state_mass.evaluate(mu)
    Mc = blocks.control_mass.evaluate(mu)
    C = blocks.coupling.evaluate(mu)
    d = blocks.lift.evaluate(mu)
    M3_full = blocks.full_state_mass.evaluate(mu)
    if target is None:
        tgt = blocks.target.evaluate(mu)
        U = blocks.target_load.evaluate(mu)
    else:
        tgt = np.asarray(target, dtype=float)
        bv = blocks.boundary_at(mu)
        U = blocks.restrict(M3_full @ (tgt - (0.0 if bv is None else bv)))
    A = saddle_matrix(blocks.beta, Mc, C, M3, K)
    rhs = np.concatenate([np.zeros(Mc.shape[0]), U, d])
    parts = dict(Mc=Mc, C=C, M3=M3, K=K, U=U, d=d, target=tgt, M3_full=M3_full)
    return FullKkt(A, rhs, blocks.beta, Mc.shape[0], blocks.n_state, mu, blocks, parts)


def cost(u, f, target, beta, M3_full, Mc) -> float:
    """J = 1/2 |u - target|^2_{L2} + beta |f|^2_{L2}."""
    e = np.asarray(u) - np.asarray(target)
    return float(0.5 * e @ (M3_full @ e) + beta * f @ (Mc @ f))


def _backward_error(A, x, b):
    r = A @ x - b
    scale = spla.norm(A, np.inf) * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)
    return np.linalg.norm(r, np.inf) / scale if scale > 0 else 0.0


def sparse_solve(A: sp.spmatrix, b: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Sparse LU solve with one refinement step; raises SolverFailure."""
    A = A.tocsc()
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SolverFailure(f"factorization failed: {exc}") from exc
    x = lu.solve(b)
    if np.all(np.isfinite(x)):
        x = x + lu.solve(b - A @ x)
    if not np.all(np.isfinite(x)) or _backward_error(A, x, b) > tol:
        op = spla.LinearOperator(A.shape, matvec=lu.solve, rmatvec=lambda y: lu.solve(y, trans="T"))
        try:
            cond = spla.onenormest(A) * spla.onenormest(op)
        except Exception:          # estimator itself can break on singular factors
            cond = np.inf
        raise SolverFailure(f"KKT solve inaccurate (condition estimate {cond:.3e})", condition=cond)
    return x


def solve_kkt(sys: FullKkt) -> OptimalTriple:
    x = sparse_solve(sys.matrix, sys.rhs)
    f, u, lam = sys.split(x)
    blocks = sys.blocks
    u_full = blocks.extend(u, mu=sys.mu)
    lam_full = blocks.extend(lam, homogeneous=True)
    J = cost(u_full, f, sys.parts["target"], sys.beta, sys.parts["M3_full"], sys.parts["Mc"])
    return OptimalTriple(u_full, f, lam_full, J)


def solve_neumann_kkt(blocks: KktBlocks, mu, target=None) -> OptimalTriple:
    if blocks.control != "boundary":
        raise InvalidArgument("blocks do not describe a boundary control problem")
    return solve_kkt(build_kkt(blocks, mu, target))


def kkt_residual(sys: FullKkt, triple: OptimalTriple) -> np.ndarray:
    """Euclidean norms of the gradient, adjoint and state equation residuals."""
    p = sys.parts
    b = sys.blocks
    u, lam, f = b.restrict(triple.u), b.restrict(triple.lam), triple.f
    r1 = 2.0 * sys.beta * (p["Mc"] @ f) - p["C"].T @ lam
    r2 = p["M3"] @ u + p["K"].T @ lam - p["U"]
    r3 = -(p["C"] @ f) + p["K"] @ u - p["d"]
    return np.array([np.linalg.norm(r1), np.linalg.norm(r2), np.linalg.norm(r3)])


def state_solve(sys: FullKkt, f: np.ndarray) -> np.ndarray:
    """Full nodal state for a given control (requires a nonsingular stiffness)."""
    p = sys.parts
    u = sparse_solve(p["K"], p["C"] @ f + p["d"])
    return sys.blocks.extend(u, mu=sys.mu)


def cost_and_gradient(sys: FullKkt, f: np.ndarray):
    """Reduced cost J(f) and its adjoint gradient 2 beta Mc f - C^T lambda(f)."""
    p = sys.parts
    b = sys.blocks
    u_full = state_solve(sys, f)
    lam = sparse_solve(p["K"].T, p["U"] - p["M3"] @ b.restrict(u_full))
    J = cost(u_full, f, p["target"], sys.beta, p["M3_full"], p["Mc"])
    grad = 2.0 * sys.beta * (p["Mc"] @ f) - p["C"].T @ lam
    return J, grad
