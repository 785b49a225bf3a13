"""Karhunen-Loeve expansion of the exponential covariance on [0, 1] (Nystrom)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ..errors import InvalidArgument


def exp_kernel(x, z, length: float = 1.0):
    return np.exp(-np.abs(np.subtract.outer(x, z)) / length)


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    dx = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


@dataclass(frozen=True)
class KlField:
    x: np.ndarray = field(repr=False)           # quadrature nodes
    weights: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    modes: np.ndarray = field(repr=False)       # (n_points, n_terms), weighted-L2 orthonormal
    sigma: float = 0.1
    length: float = 1.0

    @property
    def n_terms(self) -> int:
        return self.eigenvalues.size

    def modes_at(self, xq) -> np.ndarray:
        """Nystrom interpolation phi_n(x) = (1/lambda_n) int C(x, z) phi_n(z) dz."""
        xq = np.atleast_1d(np.asarray(xq, dtype=float))
        C = exp_kernel(xq, self.x, self.length)
        return (C * self.weights) @ self.modes / self.eigenvalues

    def scaled_modes(self, xq) -> np.ndarray:
        """sigma sqrt(lambda_n) phi_n(x), the columns multiplying the coordinates."""
        return self.sigma * self.modes_at(xq) * np.sqrt(self.eigenvalues)


def kl_expand(grid1d=1001, n_terms: int = 5, sigma: float = 0.1, length: float = 1.0) -> KlField:
    """Leading eigenpairs of the covariance operator on [0, 1].

    ``grid1d`` is a point count (uniform grid) or explicit sorted nodes.  The
    symmetric matrix W^1/2 C W^1/2 is diagonalized with trapezoid weights W.
    """
    x = np.linspace(0.0, 1.0, int(grid1d)) if np.ndim(grid1d) == 0 else np.asarray(grid1d, float)
    if n_terms < 1 or n_terms > x.size:
        raise InvalidArgument(f"n_terms={n_terms} outside [1, {x.size}]")
    if not 0.0 <= sigma:
        raise InvalidArgument("sigma must be non-negative")
    w = trapezoid_weights(x)
    sw = np.sqrt(w)
    A = sw[:, None] * exp_kernel(x, x, length) * sw[None, :]
    n = x.size
    vals, vecs = sla.eigh(A, subset_by_index=[n - n_terms, n - 1])
    vals, vecs = vals[::-1], vecs[:, ::-1]
    modes = vecs / sw[:, None]
    modes *= np.sign(modes[np.argmax(np.abs(modes), axis=0), np.arange(n_terms)])
    return KlField(x, w, vals, modes, float(sigma), float(length))


def realize_boundary(kl: KlField, xi, x=None) -> np.ndarray:
    """s(x) = sigma sum_n sqrt(lambda_n) phi_n(x) xi_n at ``x`` (default: the KL nodes)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (kl.n_terms,):
        raise InvalidArgument(f"expected {kl.n_terms} coordinates, got shape {xi.shape}")
    if np.any(np.abs(xi) > 1.0 + 1e-12):
        raise InvalidArgument("KL coordinates must lie in [-1, 1]")
    return kl.scaled_modes(kl.x if x is None else x) @ xi
