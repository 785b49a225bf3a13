import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lgmor.errors import InvalidArgument, OutOfDomain
from lgmor.rb import (ReducedSolution, collect_snapshot, empty_spaces, enrich_spaces,
                      load_bundle, orthonormalize, project_reduced, save_bundle)


def _spd(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_orthonormalize_in_weighted_inner_product(seed, k):
    X = _spd(10, seed)
    V = np.random.default_rng(seed + 1).normal(size=(10, k))
    B, kept = orthonormalize(V, X)
    assert kept.all()
    assert np.allclose(B.T @ X @ B, np.eye(k), atol=1e-10)
    # every input lies in the span: projection residual vanishes
    P = B @ (B.T @ X @ V)
    assert np.linalg.norm(P - V) <= 1e-10 * np.linalg.norm(V)


def test_orthonormalize_drops_dependent_columns():
    V = np.random.default_rng(0).normal(size=(8, 2))
    W = np.column_stack([V, V[:, 0] + 2 * V[:, 1]])
    B, kept = orthonormalize(W)
    assert B.shape[1] == 2 and list(kept) == [True, True, False]
    B2, kept2 = orthonormalize(V[:, :1] * 3.0, basis=B)
    assert B2.shape[1] == 2 and not kept2.any()
    with pytest.raises(InvalidArgument):
        orthonormalize(np.zeros((4, 2)))


def test_enrichment_dimensions(small_scenario, small_local):
    sp0 = empty_spaces(small_local, small_scenario.mu_ref)
    s1 = enrich_spaces(sp0, collect_snapshot(small_local, [0.3]))
    assert s1.dims[-1] == (2, 1) and s1.X_equals_Z
    s2 = enrich_spaces(s1, collect_snapshot(small_local, [0.3]))
    assert s2.dims[-1] == (2, 1)
    assert np.allclose(s1.Z1.T @ s1.X1 @ s1.Z1, np.eye(2), atol=1e-10)


def test_snapshot_gradient_identity(small_local):
    snap = collect_snapshot(small_local, [0.8])
    p = small_local.parts([0.8])
    lhs = 2 * small_local.beta * (p["Mc"] @ snap.f)
    assert np.allclose(lhs, p["C"].T @ snap.lam, atol=1e-10 * np.abs(lhs).max())


def test_reduced_system_symmetric_and_sized(small_greedy):
    m = small_greedy.model
    A, _ = m.system([0.41])
    assert np.abs(A - A.T).max() <= 1e-14 * np.abs(A).max()
    assert m.size == 5 * small_greedy.spaces.N == A.shape[0]


def test_snapshot_reproduction(small_greedy, small_local):
    m = small_greedy.model
    for mu in small_greedy.spaces.samples:
        ref = small_local.solve(mu).fine
        red = m.solve(mu)
        for a, b in ((ref.u, red.u), (ref.f, red.f), (ref.lam, red.lam)):
            assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(a)


def test_truncation_matches_nested_prefix(small_greedy, small_local):
    sp_ = small_greedy.spaces
    m2 = project_reduced(small_local, sp_, 2)
    assert m2.n1 == sp_.dims[2][0] and m2.n2 == sp_.dims[2][1]
    assert np.allclose(m2.Z1, sp_.Z1[:, :m2.n1])
    with pytest.raises(InvalidArgument):
        sp_.truncate(sp_.N + 1)


def test_reduced_solution_linear_combination():
    a = ReducedSolution(np.zeros(1), np.ones(2), np.ones(3), np.ones(3))
    b = 2.0 * a + a
    assert np.allclose(b.f, 3.0) and np.allclose(b.lam, 3.0)


def test_out_of_domain(small_greedy):
    with pytest.raises(OutOfDomain):
        small_greedy.model.online_solve([1.5])


def test_bundle_roundtrip(tmp_path, small_greedy, small_scenario):
    m = small_greedy.model
    path = save_bundle(m, tmp_path / "b", extra=dict(note="x"))
    for name in ("bases.npz", "pieces.npz", "coefficients.pkl", "manifest.json",
                 "multiscale_basis.npz"):
        assert (path / name).exists()
    m2 = load_bundle(path)
    mu = [0.27]
    s1, s2 = m.online_solve(mu), m2.online_solve(mu)
    assert np.allclose(s1.u, s2.u) and np.allclose(s1.f, s2.f)
    with pytest.raises(InvalidArgument):
        m2.downscale(s2)
    m3 = load_bundle(path, small_scenario.blocks)
    assert np.allclose(m3.solve(mu).u, m.solve(mu).u)
    assert m2.meta["note"] == "x"
