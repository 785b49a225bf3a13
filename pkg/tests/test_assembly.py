import pickle

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from lgmor.assembly import (AffineOperatorFamily, apply_dirichlet, assemble_boundary_mass,
                            assemble_control_mass, assemble_coupling, assemble_load,
                            assemble_state_mass, assemble_stiffness, boundary_trace,
                            build_blocks, concat_families, product_family)
from lgmor.errors import InvalidArgument, InvalidCoefficient, OutOfDomain
from lgmor.grid import build_fine_grid

from conftest import TwoFieldTheta, toy_blocks

finite = st.floats(-3, 3, allow_nan=False)


def test_stiffness_structure():
    g = build_fine_grid(6, 5)
    K = assemble_stiffness(g, 2.0)
    assert abs(K - K.T).max() < 1e-14
    assert np.allclose(K @ np.ones(g.n_nodes), 0.0)
    assert np.linalg.eigvalsh(K.toarray()).min() > -1e-12


@settings(max_examples=30, deadline=None)
@given(finite, finite, finite, st.floats(0.1, 10))
def test_stiffness_energy_of_linear_field(a, b, c, k):
    g = build_fine_grid(5, 4)
    u = a * g.nodes[:, 0] + b * g.nodes[:, 1] + c
    K = assemble_stiffness(g, k)
    assert np.isclose(u @ K @ u, k * (a * a + b * b), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(finite, finite, finite, finite)
def test_mass_integrates_products_of_linears(a, b, c, d):
    g = build_fine_grid(4, 4)
    x, y = g.nodes[:, 0], g.nodes[:, 1]
    M = assemble_state_mass(g)
    u, v = a * x + b, c * y + d
    # integral over the unit square of (a x + b)(c y + d)
    exact = (a / 2 + b) * (c / 2 + d)
    assert np.isclose(u @ M @ v, exact, atol=1e-10)


def test_tensor_forms_agree():
    g = build_fine_grid(4, 4)
    rng = np.random.default_rng(0)
    A = rng.normal(size=(g.n_elements, 2, 2))
    T = np.einsum("eab,ecb->eac", A, A) + np.eye(2)
    packed = np.column_stack([T[:, 0, 0], T[:, 0, 1], T[:, 1, 1]])
    K1 = assemble_stiffness(g, T)
    K2 = assemble_stiffness(g, packed)
    assert abs(K1 - K2).max() < 1e-12
    iso = assemble_stiffness(g, np.full(g.n_elements, 3.0))
    assert abs(iso - assemble_stiffness(g, 3.0)).max() < 1e-12


def test_invalid_coefficient_reports_element():
    g = build_fine_grid(3, 3)
    k = np.ones(g.n_elements)
    k[7] = -1.0
    with pytest.raises(InvalidCoefficient, match="element 7"):
        assemble_stiffness(g, k)
    assemble_stiffness(g, k, check=False)
    with pytest.raises(InvalidArgument):
        assemble_stiffness(g, np.ones(5))


def test_control_mass_and_coupling():
    g = build_fine_grid(5, 3)
    Mc = assemble_control_mass(g)
    assert np.isclose(Mc.diagonal().sum(), 1.0)
    C = assemble_coupling(g)
    assert C.shape == (g.n_nodes, g.n_elements)
    assert np.allclose(np.asarray(C.sum(axis=0)).ravel(), Mc.diagonal())
    # C^T 1 integrates a constant state over each element; P1 state against P0 control
    f = np.random.default_rng(1).normal(size=g.n_elements)
    assert np.isclose(np.ones(g.n_nodes) @ C @ f, f @ Mc.diagonal())


def test_load_exact_for_linear_and_p0():
    g = build_fine_grid(6, 6)
    x = g.nodes[:, 0]
    assert np.isclose(assemble_load(g, x).sum(), 0.5)
    assert np.isclose(assemble_load(g, np.full(g.n_elements, 2.0)).sum(), 2.0)
    with pytest.raises(InvalidArgument):
        assemble_load(g, np.ones(3))


def test_boundary_mass():
    g = build_fine_grid(4, 6)
    Mb = assemble_boundary_mass(g)
    assert np.isclose(Mb.sum(), 4.0)
    cyc = g.boundary_cycle()
    x = g.nodes[cyc, 0]
    # integral of x1 along the boundary: 1/2 + 1 + 1/2 + 0
    assert np.isclose(np.ones(cyc.size) @ Mb @ x, 2.0)
    T = boundary_trace(g)
    assert T.shape == (g.n_nodes, cyc.size)
    assert np.array_equal(T.tocsc().indices, cyc)


def test_affine_family_evaluate_and_bounds():
    g = build_fine_grid(3, 3)
    K1, K2 = assemble_stiffness(g, 1.0), assemble_stiffness(g, 2.0)
    fam = AffineOperatorFamily((K1, K2), TwoFieldTheta(), (np.zeros(1), np.ones(1)))
    A = fam.evaluate([0.25])
    assert abs(A - (1.25 * K1 + 1.75 * K2)).max() < 1e-14
    with pytest.raises(OutOfDomain):
        fam.evaluate([1.5])
    with pytest.raises(InvalidArgument):
        AffineOperatorFamily((K1, np.ones(3)))
    assert abs(fam.scaled(2.0).evaluate([0.0]) - 2 * fam.evaluate([0.0])).max() < 1e-14
    pickle.loads(pickle.dumps(fam.scaled(3.0)))


def test_product_and_concat_families():
    g = build_fine_grid(3, 3)
    A = AffineOperatorFamily((sp.identity(4), 2 * sp.identity(4)), TwoFieldTheta())
    v = AffineOperatorFamily((np.arange(4.0), np.ones(4)), TwoFieldTheta())
    pv = product_family(A, v)
    mu = np.array([0.3])
    assert np.allclose(pv.evaluate(mu), A.evaluate(mu) @ v.evaluate(mu))
    cv = concat_families(v, v.scaled(-1.0))
    assert cv.Q == 4
    assert np.allclose(cv.evaluate(mu), 0.0)
    assert g.n_nodes == 16


def test_dirichlet_reproduces_harmonic_linear():
    """A linear function is discrete harmonic: eliminating its boundary values recovers it."""
    g = build_fine_grid(7, 5)
    x, y = g.nodes[:, 0], g.nodes[:, 1]
    exact = 2 * x - y + 0.5
    fam = AffineOperatorFamily.constant(assemble_stiffness(g, 3.0))
    blocks = apply_dirichlet(build_blocks(g, fam, AffineOperatorFamily.constant(exact), 1.0), exact)
    K = blocks.stiffness.evaluate([0.0])
    u = np.linalg.solve(K.toarray(), blocks.lift.evaluate([0.0]))
    assert np.allclose(blocks.extend(u), exact, atol=1e-12)
    with pytest.raises(InvalidArgument):
        apply_dirichlet(blocks, exact)


def test_parametric_dirichlet_family():
    blocks = toy_blocks()
    fam_blocks = apply_dirichlet(build_blocks(blocks.grid, blocks.full_stiffness, blocks.target,
                                              blocks.beta), blocks.target)
    mu = np.array([0.7])
    g = fam_blocks.boundary_at(mu)
    B = blocks.grid.boundary
    assert np.allclose(g[B], blocks.target.evaluate(mu)[B])
    assert np.allclose(g[blocks.grid.interior], 0.0)
    with pytest.raises(InvalidArgument):
        fam_blocks.boundary_at()
    # the family lift equals the lift built from the frozen vector
    frozen = apply_dirichlet(build_blocks(blocks.grid, blocks.full_stiffness, blocks.target,
                                          blocks.beta), blocks.target.evaluate(mu))
    assert np.allclose(fam_blocks.lift.evaluate(mu), frozen.lift.evaluate(mu))
    assert np.allclose(fam_blocks.target_load.evaluate(mu), frozen.target_load.evaluate(mu))
