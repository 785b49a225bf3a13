"""Residual-based error estimator and greedy parameter selection.

Each residual of the local optimality system at a reduced solution is an
affine combination  r(mu) = sum_t w_t(mu) v_t  of fixed vectors.  Offline we
apply the inverse Cholesky factor of the inner product to every v_t and keep
the triangular factor Rb of a QR decomposition, so that Rb^T Rb is the Gram
matrix of the Riesz representations.  Online the dual norm is |Rb w|, which
avoids the cancellation of the quadratic form w^T G w; Rb and the product
are kept in extended precision.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import InvalidArgument, SolverFailure
from .gmsfem import LocalModel, _is_diagonal
from .rb import (ReducedModel, ReducedSolution, ReducedSpaces, collect_snapshot, empty_spaces,
                 enrich_spaces, project_reduced)

log = logging.getLogger(__name__)


def _outer(a, b):
    return np.outer(a, b).ravel()


# Residuals at well-resolved samples are many orders of magnitude below the
# individual terms (large Dirichlet lifts cancel against K u), so the term
# vectors, their Riesz images and the online combination carry extended
# precision.  Where longdouble equals float64 this degrades to plain float64.
_LD = np.longdouble


def _dense_ld(A) -> np.ndarray:
    return (A.toarray() if sp.issparse(A) else np.asarray(A)).astype(_LD)


def _apply_ld(A, x) -> np.ndarray:
    """A @ x in extended precision (diagonal sparse matrices stay cheap)."""
    x = np.asarray(x).astype(_LD)
    if sp.issparse(A) and _is_diagonal(A):
        d = A.diagonal().astype(_LD)
        return d[:, None] * x if x.ndim == 2 else d * x
    return _dense_ld(A) @ x


class _DualNorm:
    """Dual norm sqrt(r^T X^{-1} r) of residuals spanned by the columns of V."""

    def __init__(self, X, V):
        V = np.asarray(V).astype(_LD)
        if sp.issparse(X) and _is_diagonal(X):
            d = X.diagonal()
            if np.any(d <= 0):
                raise SolverFailure("inner product is not positive definite")
            B = V / np.sqrt(d.astype(_LD))[:, None]
        else:
            X = X.toarray() if sp.issparse(X) else np.asarray(X)
            try:
                L = sla.cholesky(0.5 * (X + X.T), lower=True)
            except sla.LinAlgError as exc:
                raise SolverFailure("inner product is not positive definite") from exc
            B = sla.solve_triangular(L, V.astype(float), lower=True).astype(_LD)
            # one refinement step against the extended-precision right-hand side
            B += sla.solve_triangular(L, (V - L.astype(_LD) @ B).astype(float), lower=True)
        if B.shape[1]:
            Q = np.linalg.qr(B.astype(float), mode="reduced")[0]
            self.Rb = Q.T.astype(_LD) @ B
        else:
            self.Rb = np.zeros((0, 0), dtype=_LD)

    @property
    def gramian(self) -> np.ndarray:
        return (self.Rb.T @ self.Rb).astype(float)

    def __call__(self, w) -> float:
        if not self.Rb.size:
            return 0.0
        y = self.Rb @ np.asarray(w).astype(_LD)
        return float(np.sqrt(np.sum(y * y)))


@dataclass
class ResidualGramians:
    """Offline factors of the three residual families (state, adjoint, gradient)."""

    state: _DualNorm = field(repr=False)
    adjoint: _DualNorm = field(repr=False)
    gradient: _DualNorm = field(repr=False)

    def gramian(self, name: str) -> np.ndarray:
        return getattr(self, name).gramian


def _family_vectors(local: LocalModel, Z1, Z2):
    """Fixed vectors of each residual, in the order the weights are produced."""
    K, M3 = local.stiffness.pieces, local.state_mass.pieces
    C, Mc = local.coupling.pieces, local.control_mass.pieces
    Z1l, Z2l = Z1.astype(_LD), Z2.astype(_LD)

    def cols(A):
        return list(A.T)

    state = ([np.asarray(v).astype(_LD) for v in local.lift.pieces]
             + [c for Cq in C for c in cols(_dense_ld(Cq) @ Z2l)]
             + [c for Kq in K for c in cols(_dense_ld(Kq) @ Z1l)])
    adjoint = ([np.asarray(v).astype(_LD) for v in local.target_load.pieces]
               + [c for Mq in M3 for c in cols(_dense_ld(Mq) @ Z1l)]
               + [c for Kq in K for c in cols(_dense_ld(Kq).T @ Z1l)])
    gradient = ([c for Cq in C for c in cols(_dense_ld(Cq).T @ Z1l)]
                + [c for Mq in Mc for c in cols(_apply_ld(Mq, Z2l))])
    n1, n2 = Z1.shape[0], Z2.shape[0]
    return [np.column_stack(v) if v else np.zeros((n, 0), dtype=_LD)
            for v, n in ((state, n1), (adjoint, n1), (gradient, n2))]


def riesz_representations(local: LocalModel, reduced: ReducedModel, mu_ref) -> ResidualGramians:
    """Offline stage of the estimator for the given reduced bases."""
    X = local.inner_product(mu_ref)
    Xc = local.control_mass.evaluate(mu_ref)
    Vs, Va, Vg = _family_vectors(local, reduced.Z1, reduced.Z2)
    return ResidualGramians(_DualNorm(X, Vs), _DualNorm(X, Va), _DualNorm(Xc, Vg))


def _weights(local: LocalModel, beta: float, mu, sol: ReducedSolution):
    th = dict(K=local.stiffness.theta(mu), M3=local.state_mass.theta(mu),
              C=local.coupling.theta(mu), Mc=local.control_mass.theta(mu),
              U=local.target_load.theta(mu), d=local.lift.theta(mu))
    ws = np.concatenate([th["d"], _outer(th["C"], sol.f), -_outer(th["K"], sol.u)])
    wa = np.concatenate([th["U"], -_outer(th["M3"], sol.u), -_outer(th["K"], sol.lam)])
    wg = np.concatenate([_outer(th["C"], sol.lam), -2.0 * beta * _outer(th["Mc"], sol.f)])
    return ws, wa, wg


@dataclass(frozen=True)
class EstimatorReport:
    mus: np.ndarray
    values: np.ndarray          # Delta_N per parameter
    components: np.ndarray      # (n, 3): state, adjoint, gradient dual norms
    argmax: int
    history: tuple = ()

    @property
    def max(self) -> float:
        return float(self.values[self.argmax]) if self.values.size else 0.0


class Estimator:
    def __init__(self, local: LocalModel, reduced: ReducedModel, mu_ref):
        self.local = local
        self.reduced = reduced
        self.mu_ref = np.atleast_1d(np.asarray(mu_ref, dtype=float))
        self.gramians = riesz_representations(local, reduced, self.mu_ref)

    def components(self, mu, sol: ReducedSolution | None = None) -> np.ndarray:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        sol = self.reduced.online_solve(mu) if sol is None else sol
        ws, wa, wg = _weights(self.local, self.reduced.beta, mu, sol)
        g = self.gramians
        return np.array([g.state(ws), g.adjoint(wa), g.gradient(wg)])

    def __call__(self, mu, sol: ReducedSolution | None = None) -> float:
        return float(np.linalg.norm(self.components(mu, sol)))

    def report(self, mus) -> EstimatorReport:
        mus = np.atleast_2d(np.asarray(mus, dtype=float))
        comps = np.array([self.components(m) for m in mus]).reshape(-1, 3)
        vals = np.linalg.norm(comps, axis=1)
        arg = int(np.argmax(vals)) if vals.size else -1      # first index wins ties
        return EstimatorReport(mus, vals, comps, arg)


def estimator(local: LocalModel, reduced: ReducedModel, mu, mu_ref, sol=None) -> float:
    return Estimator(local, reduced, mu_ref)(mu, sol)


def direct_residual_norms(local: LocalModel, reduced: ReducedModel, mu, mu_ref,
                          sol: ReducedSolution | None = None) -> np.ndarray:
    """Oracle: explicit residual vectors and dense Riesz solves.

    Residuals are formed in extended precision from the evaluated local
    operators, then the Riesz problems are solved directly.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sol = reduced.online_solve(mu) if sol is None else sol
    Z1, Z2 = reduced.Z1.astype(_LD), reduced.Z2.astype(_LD)
    u, f, lam = Z1 @ sol.u.astype(_LD), Z2 @ sol.f.astype(_LD), Z1 @ sol.lam.astype(_LD)

    def ev(fam):
        th = fam.theta(mu).astype(_LD)
        return sum(t * (_dense_ld(P) if P.ndim == 2 else np.asarray(P).astype(_LD))
                   for t, P in zip(th, fam.pieces))

    K, M3, C = ev(local.stiffness), ev(local.state_mass), ev(local.coupling)
    Mc_f = sum(t * _apply_ld(P, f) for t, P in zip(local.control_mass.theta(mu).astype(_LD),
                                                   local.control_mass.pieces))
    r1 = (ev(local.lift) + C @ f - K @ u).astype(float)
    r2 = (ev(local.target_load) - M3 @ u - K.T @ lam).astype(float)
    r3 = (C.T @ lam - _LD(2.0 * reduced.beta) * Mc_f).astype(float)
    X = local.inner_product(mu_ref)
    Xc = local.control_mass.evaluate(mu_ref)
    Xc = Xc.toarray() if sp.issparse(Xc) else Xc
    return np.sqrt(np.maximum([r1 @ np.linalg.solve(X, r1), r2 @ np.linalg.solve(X, r2),
                               r3 @ np.linalg.solve(Xc, r3)], 0.0))


# ---------------------------------------------------------------- greedy

@dataclass
class GreedyResult:
    spaces: ReducedSpaces
    model: ReducedModel
    estimator: Estimator
    log: list                   # dicts: iter, mu, eps, components
    mu_ref: np.ndarray

    @property
    def samples(self) -> np.ndarray:
        return np.array(self.spaces.samples)

    @property
    def eps(self) -> np.ndarray:
        return np.array([r["eps"] for r in self.log])


def greedy_train(local: LocalModel, train, tol: float = 1e-5, n_max: int = 10,
                 mu_ref=None) -> GreedyResult:
    """Select samples by maximizing the estimator over the training set.

    The first sample is the componentwise mean of the training set; each
    iteration enriches the spaces with the local solution at the current
    maximizer and removes it from the pool.  Stops once the largest estimate
    over the remaining pool is <= ``tol`` or ``n_max`` samples are in.
    """
    pool = np.asarray(train, dtype=float)
    pool = pool[:, None] if pool.ndim == 1 else pool        # (n,) means scalar parameters
    if pool.size == 0:
        raise InvalidArgument("empty training set")
    if tol <= 0 or n_max < 1:
        raise InvalidArgument("tolerance and n_max must be positive")
    mu_ref = pool.mean(axis=0) if mu_ref is None else np.atleast_1d(mu_ref).astype(float)
    spaces = empty_spaces(local, mu_ref)

    mu = pool.mean(axis=0)
    records = []
    while True:
        hit = np.flatnonzero(np.all(pool == mu, axis=1))
        if hit.size:
            pool = np.delete(pool, hit[0], axis=0)
        t0 = time.perf_counter()
        snap = collect_snapshot(local, mu)
        t_snap = time.perf_counter() - t0
        spaces = enrich_spaces(spaces, snap)
        model = project_reduced(local, spaces)
        est = Estimator(local, model, mu_ref)
        rep = est.report(pool) if pool.shape[0] else None
        eps = rep.max if rep is not None else 0.0
        comps = rep.components[rep.argmax] if rep is not None else np.zeros(3)
        records.append(dict(iter=spaces.N, mu=np.array(mu), eps=eps, components=comps,
                            t_snapshot=t_snap))
        log.info("greedy N=%d mu=%s eps=%.3e", spaces.N, mu, eps)
        if eps <= tol or spaces.N >= n_max or rep is None:
            break
        mu = pool[rep.argmax].copy()
    return GreedyResult(spaces, model, est, records, mu_ref)
