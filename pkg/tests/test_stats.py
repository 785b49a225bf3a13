from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lgmor.errors import InvalidArgument
from lgmor.stochastic import error_metrics, moments, relative_error


def two_pass(X):
    n = len(X)
    mean = [sum(row[j] for row in X) / n for j in range(len(X[0]))]
    var = [sum((row[j] - mean[j]) ** 2 for row in X) / (n - 1) for j in range(len(X[0]))]
    return np.array(mean), np.array(var)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3)))
def test_moments_match_two_pass(X):
    m = moments(X)
    mean, var = two_pass(X.tolist())
    assert np.allclose(m.mean, mean, atol=1e-9)
    assert np.allclose(m.var, var, rtol=1e-9, atol=1e-6)
    assert np.allclose(m.std ** 2, m.var)
    assert m.n == X.shape[0]


def test_moments_need_two_samples():
    with pytest.raises(InvalidArgument):
        moments(np.ones((1, 3)))


def _t(u, f, lam):
    return SimpleNamespace(u=np.asarray(u, float), f=np.asarray(f, float), lam=np.asarray(lam, float))


def test_error_metrics_by_hand():
    M = sp.identity(2)
    refs = [_t([3, 4], [1, 0], [0, 2]), _t([1, 0], [2, 0], [0, 1])]
    reds = [_t([3, 3], [1, 0], [0, 1]), _t([1, 0], [1, 0], [0, 1])]
    out = error_metrics(refs, reds, M, M, stiffness=[2 * M, 2 * M])
    assert np.isclose(out["e2_u"], (1 / 5 + 0) / 2)
    assert np.isclose(out["e2_f"], (0 + 0.5) / 2)
    assert np.isclose(out["e2_lam"], (0.5 + 0) / 2)
    assert np.isclose(out["eH_u"], out["e2_u"])


def test_zero_reference_excluded_with_warning():
    M = np.eye(2)
    refs = [_t([0, 0], [1, 0], [1, 0]), _t([1, 0], [1, 0], [1, 0])]
    reds = [_t([1, 0], [1, 0], [1, 0]), _t([0, 0], [1, 0], [1, 0])]
    with pytest.warns(RuntimeWarning):
        out = error_metrics(refs, reds, M, M)
    assert np.isclose(out["e2_u"], 1.0)


def test_mismatched_lists():
    with pytest.raises(InvalidArgument):
        error_metrics([], [], np.eye(1), np.eye(1))


def test_relative_error_weighted():
    A = np.diag([4.0, 1.0])
    assert np.isclose(relative_error([1, 0], [0, 0], A), 1.0)
    assert np.isclose(relative_error([1, 1], [1, 0], A), 1 / np.sqrt(5))
