"""Global reduced basis on top of the local multiscale space.

Snapshots are local solutions (coefficients in V_lr).  The state/adjoint
space Z1 collects both u and lambda snapshots (so trial and test spaces
coincide), the control space Z2 the controls.  Both are orthonormal in L2.
Bases are stored as columns and grow by prefixes, so a model for any
N <= N_max is obtained by truncation.
"""
from __future__ import annotations

import json
import pickle
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import AffineOperatorFamily, KktBlocks, combine
from .errors import DegenerateReducedSystem, InvalidArgument, OutOfDomain
from .fullorder import OptimalTriple, cost
from .gmsfem import LocalModel, LocalSolution


def _inner(X, a, b):
    return a @ (b if X is None else X @ b)


def orthonormalize(vectors, X=None, basis=None, tol: float = 1e-10):
    """Gram-Schmidt (two passes) in the inner product ``X``.

    ``vectors`` are columns.  Vectors whose remainder after orthogonalization
    falls below ``tol`` times their norm are dropped.  With ``basis`` the
    new vectors are appended to an already orthonormal set.
    Returns ``(basis, kept)`` where ``kept`` flags which inputs survived.
    """
    V = np.asarray(vectors, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    out = [] if basis is None else [basis[:, k] for k in range(basis.shape[1])]
    n0 = len(out)
    kept = np.zeros(V.shape[1], dtype=bool)
    if basis is None and not np.any(V):
        raise InvalidArgument("cannot orthonormalize an all-zero set")
    for j in range(V.shape[1]):
        v = V[:, j].copy()
        nv = np.sqrt(max(_inner(X, v, v), 0.0))
        if nv == 0.0:
            continue
        for _ in range(2):
            for q in out:
                v -= _inner(X, q, v) * q
        nr = np.sqrt(max(_inner(X, v, v), 0.0))
        if nr <= tol * nv:
            continue
        out.append(v / nr)
        kept[j] = True
    n = V.shape[0]
    B = np.column_stack(out) if out else np.zeros((n, 0))
    if B.shape[1] == n0 and basis is None:
        raise InvalidArgument("all input vectors are numerically zero")
    return B, kept


@dataclass(frozen=True)
class ReducedSpaces:
    samples: tuple                               # selected parameters, in order
    Z1: np.ndarray = field(repr=False)           # (M, n1) state/adjoint basis, local coords
    Z2: np.ndarray = field(repr=False)           # (N_c, n2) control basis
    X1: np.ndarray = field(repr=False)           # L2 Gram of V_lr
    X2: object = field(repr=False)               # control mass
    dims: tuple = ((0, 0),)                      # (n1, n2) after each enrichment
    tol: float = 1e-10

    @property
    def N(self) -> int:
        return len(self.samples)

    @property
    def X_equals_Z(self) -> bool:
        # trial and test spaces are literally the same matrix
        return True

    def truncate(self, N: int) -> "ReducedSpaces":
        if not 0 <= N <= self.N:
            raise InvalidArgument(f"cannot truncate {self.N} samples to {N}")
        n1, n2 = self.dims[N]
        return replace(self, samples=self.samples[:N], Z1=self.Z1[:, :n1], Z2=self.Z2[:, :n2],
                       dims=self.dims[:N + 1])


def empty_spaces(model: LocalModel, mu_ref, tol: float = 1e-10) -> ReducedSpaces:
    """Empty spaces with the L2 inner products frozen at ``mu_ref``."""
    X1 = model.state_mass.evaluate(mu_ref)
    X1 = 0.5 * (X1 + X1.T)
    X2 = model.control_mass.evaluate(mu_ref)
    return ReducedSpaces((), np.zeros((model.M, 0)), np.zeros((model.n_control, 0)),
                         X1, X2, ((0, 0),), tol)


def collect_snapshot(model: LocalModel, mu) -> LocalSolution:
    return model.solve(mu)


def enrich_spaces(spaces: ReducedSpaces, snap: LocalSolution) -> ReducedSpaces:
    Z1, _ = orthonormalize(np.column_stack([snap.u, snap.lam]), spaces.X1,
                           basis=spaces.Z1, tol=spaces.tol)
    Z2, _ = orthonormalize(snap.f, spaces.X2, basis=spaces.Z2, tol=spaces.tol)
    return replace(spaces, samples=spaces.samples + (np.array(snap.mu, dtype=float),),
                   Z1=Z1, Z2=Z2, dims=spaces.dims + ((Z1.shape[1], Z2.shape[1]),))


@dataclass(frozen=True)
class ReducedSolution:
    mu: np.ndarray
    f: np.ndarray
    u: np.ndarray
    lam: np.ndarray

    def __add__(self, other):
        return ReducedSolution(self.mu, self.f + other.f, self.u + other.u, self.lam + other.lam)

    def __rmul__(self, a):
        return ReducedSolution(self.mu, a * self.f, a * self.u, a * self.lam)


class ReducedModel:
    """Affine pieces projected onto (Z1, Z2); every online operation is dense and small."""

    def __init__(self, pieces: dict, coefficients: dict, bounds, beta: float,
                 Z1, Z2, R, blocks: KktBlocks | None = None, meta: dict | None = None):
        self.pieces = pieces              # name -> tuple of dense arrays
        self.coefficients = coefficients  # name -> callable
        self.bounds = bounds
        self.beta = float(beta)
        self.Z1, self.Z2, self.R = Z1, Z2, R
        self.blocks = blocks
        self.meta = dict(meta or {})

    @property
    def n1(self) -> int:
        return self.Z1.shape[1]

    @property
    def n2(self) -> int:
        return self.Z2.shape[1]

    @property
    def size(self) -> int:
        return self.n2 + 2 * self.n1

    @property
    def n_pieces(self) -> int:
        return sum(len(p) for p in self.pieces.values())

    def _theta(self, name, mu):
        th = np.atleast_1d(np.asarray(self.coefficients[name](mu), dtype=float))
        if th.shape != (len(self.pieces[name]),):
            raise InvalidArgument(f"coefficient count mismatch for {name}")
        return th

    def _check(self, mu):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if self.bounds is not None:
            lo, hi = self.bounds
            if np.any(mu < np.asarray(lo) - 1e-12) or np.any(mu > np.asarray(hi) + 1e-12):
                raise OutOfDomain(f"parameter {mu} outside [{lo}, {hi}]")
        return mu

    def parts(self, mu) -> dict:
        mu = self._check(mu)
        return {k: combine(self.pieces[k], self._theta(k, mu)) for k in self.pieces}

    def system(self, mu):
        """Dense reduced saddle matrix (order f, u, lambda) and right-hand side."""
        p = self.parts(mu)
        n1, n2 = self.n1, self.n2
        A = np.zeros((n2 + 2 * n1, n2 + 2 * n1))
        f, u, l = slice(0, n2), slice(n2, n2 + n1), slice(n2 + n1, n2 + 2 * n1)
        A[f, f] = 2.0 * self.beta * p["Mc"]
        A[f, l] = -p["C"].T
        A[u, u] = p["M3"]
        A[u, l] = p["K"].T
        A[l, f] = -p["C"]
        A[l, u] = p["K"]
        b = np.concatenate([np.zeros(n2), p["U"], p["d"]])
        return A, b

    def online_solve(self, mu) -> ReducedSolution:
        mu = self._check(mu)
        A, b = self.system(mu)
        try:
            with np.errstate(all="raise"):
                x = sla.solve(A, b, assume_a="sym", check_finite=True)
        except (sla.LinAlgError, FloatingPointError, ValueError) as exc:
            raise DegenerateReducedSystem(f"reduced system singular at mu={mu}") from exc
        if not np.all(np.isfinite(x)):
            raise DegenerateReducedSystem(f"reduced solve produced non-finite values at mu={mu}")
        n1, n2 = self.n1, self.n2
        return ReducedSolution(mu, x[:n2], x[n2:n2 + n1], x[n2 + n1:])

    def to_local(self, sol: ReducedSolution):
        """Coefficients in V_lr: (u, f, lambda)."""
        return self.Z1 @ sol.u, self.Z2 @ sol.f, self.Z1 @ sol.lam

    def downscale(self, sol: ReducedSolution, cost_value: bool = True) -> OptimalTriple:
        ul, f, laml = self.to_local(sol)
        b = self.blocks
        if b is None:
            raise InvalidArgument("model was loaded without fine-grid blocks")
        u = b.extend(self.R @ ul, mu=sol.mu)
        lam = b.extend(self.R @ laml, homogeneous=True)
        J = np.nan
        if cost_value:
            J = cost(u, f, b.target.evaluate(sol.mu), self.beta,
                     b.full_state_mass.evaluate(sol.mu), b.control_mass.evaluate(sol.mu))
        return OptimalTriple(u, f, lam, J)

    def solve(self, mu) -> OptimalTriple:
        return self.downscale(self.online_solve(mu))


def _proj(Z, A, W=None):
    W = Z if W is None else W
    out = Z.T @ (A @ W)
    return np.asarray(out)


def project_reduced(model: LocalModel, spaces: ReducedSpaces, N: int | None = None) -> ReducedModel:
    sp_ = spaces if N is None else spaces.truncate(N)
    Z1, Z2 = sp_.Z1, sp_.Z2
    if Z1.shape[0] != model.M or Z2.shape[0] != model.n_control:
        raise InvalidArgument("reduced bases do not match the local model")

    def mats(fam, left, right):
        return tuple(_proj(left, P, right) for P in fam.pieces)

    pieces = dict(
        K=mats(model.stiffness, Z1, Z1),
        M3=mats(model.state_mass, Z1, Z1),
        Mc=tuple(np.asarray(Z2.T @ (P @ Z2)) for P in model.control_mass.pieces),
        C=tuple(np.asarray(Z1.T @ (P @ Z2)) for P in model.coupling.pieces),
        U=tuple(Z1.T @ v for v in model.target_load.pieces),
        d=tuple(Z1.T @ v for v in model.lift.pieces),
    )
    coefs = dict(K=model.stiffness.coefficients, M3=model.state_mass.coefficients,
                 Mc=model.control_mass.coefficients, C=model.coupling.coefficients,
                 U=model.target_load.coefficients, d=model.lift.coefficients)
    meta = dict(N=sp_.N, n1=Z1.shape[1], n2=Z2.shape[1], M=model.M,
                Q={k: len(v) for k, v in pieces.items()},
                samples=[np.asarray(s).tolist() for s in sp_.samples], tol=sp_.tol)
    return ReducedModel(pieces, coefs, model.stiffness.bounds, model.beta, Z1, Z2,
                        model.space.R, model.blocks, meta)


def online_solve(model: ReducedModel, mu) -> ReducedSolution:
    return model.online_solve(mu)


def downscale(model: ReducedModel, sol: ReducedSolution) -> OptimalTriple:
    return model.downscale(sol)


# ---------------------------------------------------------------- offline bundle

def save_bundle(model: ReducedModel, path, extra: dict | None = None) -> Path:
    """Write bases, projected pieces, coefficient callables and a JSON manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    np.savez(path / "bases.npz", Z1=model.Z1, Z2=model.Z2)
    sp.save_npz(path / "multiscale_basis.npz", sp.csc_matrix(model.R))
    flat = {f"{k}_{q}": P for k, v in model.pieces.items() for q, P in enumerate(v)}
    np.savez(path / "pieces.npz", **flat)
    with open(path / "coefficients.pkl", "wb") as fh:
        pickle.dump(dict(coefficients=model.coefficients, bounds=model.bounds), fh)
    manifest = dict(model.meta, beta=model.beta, pieces=sorted(flat), **(extra or {}))
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"{type(o).__name__} is not serializable")


def load_bundle(path, blocks: KktBlocks | None = None) -> ReducedModel:
    """Reload a saved model; ``blocks`` (fine data) is only needed for downscaling."""
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    bases = np.load(path / "bases.npz")
    R = sp.load_npz(path / "multiscale_basis.npz").tocsc()
    raw = np.load(path / "pieces.npz")
    pieces: dict = {}
    for key in manifest["pieces"]:
        name, q = key.rsplit("_", 1)
        pieces.setdefault(name, {})[int(q)] = raw[key]
    pieces = {k: tuple(v[q] for q in sorted(v)) for k, v in pieces.items()}
    with open(path / "coefficients.pkl", "rb") as fh:
        co = pickle.load(fh)
    return ReducedModel(pieces, co["coefficients"], co["bounds"], manifest["beta"],
                        bases["Z1"], bases["Z2"], R, blocks, manifest)
