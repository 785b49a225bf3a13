"""Empirical interpolation of parameter-dependent fields.

``fn(mu, idx=None)`` returns the field at all points or only at the entries
``idx``; online evaluation only ever asks for the magic entries.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from ..errors import InvalidArgument


@dataclass(frozen=True)
class EimSurrogate:
    basis: np.ndarray = field(repr=False)    # (n_points, Q), q_k(x_k) = 1
    magic: np.ndarray                        # (Q,) magic point indices
    history: np.ndarray                      # sup-norm training residual before each addition, then final
    tol: float
    converged: bool
    fn: Callable = field(repr=False, default=None)

    @property
    def Q(self) -> int:
        return self.basis.shape[1]

    @property
    def interpolation_matrix(self) -> np.ndarray:
        return self.basis[self.magic]

    @property
    def coefficients(self) -> "EimCoefficients":
        return EimCoefficients(self.fn, self.magic, self.interpolation_matrix)

    def __call__(self, mu) -> np.ndarray:
        return self.basis @ eim_evaluate(self, mu)


@dataclass(frozen=True)
class EimCoefficients:
    """Picklable coefficient map mu -> theta(mu) used by affine families."""

    fn: Callable
    magic: np.ndarray
    B: np.ndarray

    def __call__(self, mu) -> np.ndarray:
        vals = np.asarray(self.fn(mu, self.magic), dtype=float)
        return sla.solve_triangular(self.B, vals, lower=True, unit_diagonal=True)


def eim_build(fn: Callable, train, tol: float = 1e-6, max_terms: int = 50) -> EimSurrogate:
    """Greedy magic-point construction on a training set.

    Stops when the sup-norm interpolation error over the training set is
    <= ``tol`` (absolute), when the training snapshots are exhausted, or at
    ``max_terms``; in the last case a warning is issued and ``converged`` is
    False.
    """
    train = np.asarray(train, dtype=float)
    train = train[:, None] if train.ndim == 1 else train
    if train.shape[0] < 1:
        raise InvalidArgument("EIM needs at least one training sample")
    S = np.column_stack([np.asarray(fn(mu), dtype=float) for mu in train])
    basis = np.zeros((S.shape[0], 0))
    magic: list[int] = []
    history = []
    R = S.copy()
    converged = False
    while True:
        err = np.max(np.abs(R), axis=0)
        worst = int(np.argmax(err))
        history.append(float(err[worst]))
        if err[worst] <= tol:
            converged = True
            break
        if len(magic) >= max_terms:
            break
        r = R[:, worst]
        k = int(np.argmax(np.abs(r)))
        if k in magic:       # numerically exhausted
            break
        basis = np.column_stack([basis, r / r[k]])
        magic.append(k)
        B = basis[magic]
        coef = sla.solve_triangular(B, S[magic], lower=True, unit_diagonal=True)
        R = S - basis @ coef
    if not converged:
        warnings.warn(f"EIM stopped at {len(magic)} terms with residual {history[-1]:.3e} > {tol:.1e}",
                      RuntimeWarning, stacklevel=2)
    if not magic:           # identically zero family: keep one trivial term
        basis = np.zeros((S.shape[0], 1))
        basis[0, 0] = 1.0
        magic = [0]
    return EimSurrogate(basis, np.array(magic), np.array(history), float(tol), converged, fn)


def eim_evaluate(surrogate: EimSurrogate, mu) -> np.ndarray:
    """Affine coefficients of the interpolant at ``mu``."""
    return surrogate.coefficients(mu)
