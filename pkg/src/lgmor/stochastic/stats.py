"""Sample moments and sample-averaged relative error metrics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument


@dataclass(frozen=True)
class Moments:
    mean: np.ndarray
    var: np.ndarray
    std: np.ndarray
    n: int


def moments(samples) -> Moments:
    """Mean and unbiased variance over axis 0."""
    X = np.asarray(samples, dtype=float)
    if X.shape[0] < 2:
        raise InvalidArgument("variance needs at least two samples")
    mean = X.mean(axis=0)
    var = X.var(axis=0, ddof=1)
    return Moments(mean, var, np.sqrt(var), X.shape[0])


def _norm(A, v):
    return float(np.sqrt(max(v @ (A @ v), 0.0)))


def relative_error(ref, approx, A) -> float:
    ref, approx = np.asarray(ref), np.asarray(approx)
    return _norm(A, ref - approx) / _norm(A, ref)


def _mean_relative(refs, reds, mats):
    vals = []
    for r, a, A in zip(refs, reds, mats):
        nr = _norm(A, np.asarray(r))
        if nr == 0.0:
            warnings.warn("reference with zero norm excluded from error average", RuntimeWarning,
                          stacklevel=3)
            continue
        vals.append(_norm(A, np.asarray(r) - np.asarray(a)) / nr)
    return float(np.mean(vals)) if vals else np.nan


def error_metrics(refs, reds, state_mass, control_mass, stiffness=None) -> dict:
    """Sample averages of relative errors of (u, f, lambda).

    ``refs``/``reds`` are sequences of objects with ``u``, ``f`` and ``lam``.
    Masses may be single matrices or one per sample; ``stiffness`` (one
    per sample, acting on full nodal vectors) enables the energy errors.
    """
    refs, reds = list(refs), list(reds)
    if len(refs) != len(reds) or not refs:
        raise InvalidArgument("reference and reduced sample lists must match and be non-empty")
    n = len(refs)

    def per_sample(A):
        return A if isinstance(A, (list, tuple)) else [A] * n

    M3, Mc = per_sample(state_mass), per_sample(control_mass)
    out = dict(
        e2_u=_mean_relative([r.u for r in refs], [r.u for r in reds], M3),
        e2_f=_mean_relative([r.f for r in refs], [r.f for r in reds], Mc),
        e2_lam=_mean_relative([r.lam for r in refs], [r.lam for r in reds], M3),
    )
    if stiffness is not None:
        K = per_sample(stiffness)
        out["eH_u"] = _mean_relative([r.u for r in refs], [r.u for r in reds], K)
        out["eH_lam"] = _mean_relative([r.lam for r in refs], [r.lam for r in reds], K)
    return out
