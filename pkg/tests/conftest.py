import numpy as np
import pytest

from lgmor.assembly import AffineOperatorFamily, apply_dirichlet, assemble_stiffness, build_blocks
from lgmor.grid import build_fine_grid
from lgmor.scenarios import distributed_scenario


class TwoFieldTheta:
    def __call__(self, mu):
        return np.array([1.0 + mu[0], 2.0 - mu[0]])


class TwoTargetTheta:
    def __call__(self, mu):
        return np.array([mu[0], 1.0])


def toy_blocks(n=8, beta=1e-2, g=0.0):
    """Two-piece diffusion on an n x n grid with a two-piece target."""
    grid = build_fine_grid(n, n)
    c = grid.centroids()
    k1 = 1.0 + 10.0 * (c[:, 1] > 0.5)
    k2 = 1.0 + 100.0 * (np.abs(c[:, 0] - 0.5) < 0.2)
    bounds = (np.zeros(1), np.ones(1))
    K = AffineOperatorFamily((assemble_stiffness(grid, k1), assemble_stiffness(grid, k2)),
                             TwoFieldTheta(), bounds)
    x, y = grid.nodes[:, 0], grid.nodes[:, 1]
    U = AffineOperatorFamily((np.sin(np.pi * x) * y, x * y * (1 - y)), TwoTargetTheta(), bounds)
    blocks = build_blocks(grid, K, U, beta)
    return apply_dirichlet(blocks, np.full(grid.n_nodes, float(g)))


@pytest.fixture(scope="session")
def small_scenario():
    return distributed_scenario(nx=12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_local(small_scenario):
    from lgmor.gmsfem import build_multiscale_space, project_kkt_local
    from lgmor.grid import build_coarse_grid

    sc = small_scenario
    space = build_multiscale_space(sc.grid, build_coarse_grid(sc.grid, 3, 3), sc.basis_kappa, 3,
                                   sc.blocks.state_dofs)
    return project_kkt_local(sc.blocks, space)


@pytest.fixture(scope="session")
def small_greedy(small_scenario, small_local):
    from lgmor.greedy import greedy_train

    train = small_scenario.sample(15, 0)
    return greedy_train(small_local, train, tol=1e-12, n_max=4, mu_ref=small_scenario.mu_ref)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
