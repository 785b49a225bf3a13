"""The three model problems: distributed control with random coefficient and
target, distributed control on a random domain, and Neumann boundary control.

Every scenario exposes its optimality system as affine families.  Non-affine
data (random-domain tensor and target, Gaussian coefficient) are replaced by
EIM surrogates once, and the surrogate defines both the reference and the
reduced problems.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import (AffineOperatorFamily, KktBlocks, apply_dirichlet, assemble_control_mass,
                       assemble_coupling, assemble_state_mass, assemble_stiffness, build_blocks,
                       build_neumann_blocks)
from .errors import InvalidArgument
from .fullorder import OptimalTriple, build_kkt, solve_kkt
from .grid import FineGrid, build_fine_grid
from .stochastic.domain_map import AffineMap, pullback_tensor
from .stochastic.eim import EimSurrogate, eim_build
from .stochastic.kl import kl_expand
from .stochastic.params import ParamDomain, sample_parameters

CONTRAST = 1e4


# ---------------------------------------------------------------- synthetic high-contrast fields

def channel_field(points: np.ndarray, seed: int = 0, n_channels: int = 6, width: float = 0.03,
                  contrast: float = CONTRAST) -> np.ndarray:
    """Background 1 with thin horizontal high-conductivity channels."""
    rng = np.random.default_rng(seed)
    x, y = points[:, 0], points[:, 1]
    out = np.ones(points.shape[0])
    levels = (np.arange(n_channels) + 0.5) / n_channels + rng.uniform(-0.03, 0.03, n_channels)
    for c in levels:
        a, b = np.sort(rng.uniform(0.05, 0.95, 2))
        a, b = min(a, 0.15), max(b, 0.85)
        out[(np.abs(y - c) < width / 2) & (x > a) & (x < b)] = contrast
    return out


def inclusion_field(points: np.ndarray, seed: int = 1, n_inclusions: int = 24, radius: float = 0.035,
                    contrast: float = CONTRAST) -> np.ndarray:
    """Background 1 with randomly placed high-conductivity disks."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.08, 0.92, size=(n_inclusions, 2))
    out = np.ones(points.shape[0])
    for c in centers:
        out[np.sum((points - c) ** 2, axis=1) < radius ** 2] = contrast
    return out


# ---------------------------------------------------------------- coefficient maps (picklable)

class DistributedStiffnessTheta:
    def __call__(self, mu):
        m = float(mu[0])
        return np.array([m * m + (m + 0.5) ** 2, (1.0 + np.exp(m) * np.cos(m / 3.0)) ** 2])


class DistributedTargetTheta:
    def __call__(self, mu):
        m = float(mu[0])
        return np.array([m, np.cos(m), m * m, np.sin(m)])


def distributed_target_fields(nodes: np.ndarray) -> list[np.ndarray]:
    x1, x2 = nodes[:, 0], nodes[:, 1]
    return [x1 * x2 * (x1 + 1) * (x2 - 1),
            x1 ** 2 * x2 * (x1 - 1) * (x2 + 1),
            x1 * x2 ** 3 * (x1 - 1) * (x2 - 1),
            np.exp(x1 / 3) * x2 ** 2]


class AffineInXi:
    """(1, xi_1, ..., xi_m)."""

    def __call__(self, xi):
        return np.concatenate([[1.0], np.asarray(xi, dtype=float)])


@dataclass(frozen=True)
class RandomDomainTensor:
    """Packed pulled-back tensor (k11, k12, k22) per element, flattened element-major."""

    amap: AffineMap = field(repr=False)

    def __call__(self, xi, idx=None):
        elems = None if idx is None else np.unique(np.asarray(idx) // 3)
        J, det, cent = self.amap.element_geometry(xi, elems)
        kappa = random_domain_kappa(cent)
        T = pullback_tensor(J, det, kappa)
        packed = np.column_stack([T[:, 0, 0], T[:, 0, 1], T[:, 1, 1]])
        if idx is None:
            return packed.ravel()
        pos = np.searchsorted(elems, np.asarray(idx) // 3)
        return packed[pos, np.asarray(idx) % 3]


@dataclass(frozen=True)
class RandomDomainTarget:
    amap: AffineMap = field(repr=False)

    def __call__(self, xi, idx=None):
        nodes = slice(None) if idx is None else np.asarray(idx)
        x1 = self.amap.grid.nodes[nodes, 0]
        x2 = self.amap.x2(xi, None if idx is None else np.asarray(idx))
        return random_domain_target(np.column_stack([x1, x2]))


def random_domain_kappa(points):
    return np.abs(points[:, 0] * points[:, 1]) + 1.0


def random_domain_target(points):
    x1, x2 = points[:, 0], points[:, 1]
    return x1 * x2 * (x1 - 1) * (x2 - x1 / 2 - 1) + 1.0


@dataclass(frozen=True)
class GaussianBump:
    """exp(-|x - mu|^2 / 4) at fixed points."""

    points: np.ndarray = field(repr=False)

    def __call__(self, mu, idx=None):
        p = self.points if idx is None else self.points[np.asarray(idx)]
        return np.exp(-np.sum((p - np.asarray(mu)[:2]) ** 2, axis=1) / 4.0)


@dataclass(frozen=True)
class SquaredDistance:
    points: np.ndarray = field(repr=False)

    def __call__(self, mu, idx=None):
        p = self.points if idx is None else self.points[np.asarray(idx)]
        return np.sum((p - np.asarray(mu)[:2]) ** 2, axis=1)


def neumann_source(points):
    x1, x2 = points[:, 0], points[:, 1]
    return (0.5 * np.sin(np.pi * x1) * np.cos(2 * np.pi * x2) + x1 * x2
            + (x1 / 6 + np.sin(np.pi * x2) + 1) ** 2)


# ---------------------------------------------------------------- scenario container

@dataclass
class Scenario:
    name: str
    grid: FineGrid = field(repr=False)
    blocks: KktBlocks = field(repr=False)
    domain: ParamDomain
    basis_kappa: np.ndarray = field(repr=False)   # coefficient for the multiscale basis
    affine: bool
    eim: dict = field(default_factory=dict, repr=False)
    settings: dict = field(default_factory=dict)

    @property
    def beta(self) -> float:
        return self.blocks.beta

    @property
    def mu_ref(self) -> np.ndarray:
        return self.domain.mean

    def sample(self, n: int, seed) -> np.ndarray:
        return sample_parameters(self.domain, n, seed)

    def fine_solve(self, mu) -> OptimalTriple:
        return solve_kkt(build_kkt(self.blocks, mu))

    def energy_matrix(self, mu):
        return self.blocks.full_stiffness.evaluate(mu)

    def state_mass(self, mu):
        return self.blocks.full_state_mass.evaluate(mu)

    def control_mass(self, mu):
        return self.blocks.control_mass.evaluate(mu)


def _eim_stiffness(grid, sur: EimSurrogate, bounds, packed: bool) -> AffineOperatorFamily:
    cols = [sur.basis[:, q].reshape(grid.n_elements, 3) if packed else sur.basis[:, q]
            for q in range(sur.Q)]
    pieces = tuple(assemble_stiffness(grid, c, check=False) for c in cols)
    return AffineOperatorFamily(pieces, sur.coefficients, bounds)


def distributed_scenario(nx: int = 60, ny: int | None = None, beta: float = 1e-2,
                         theta=(1.0, 1.0), field_seed: int = 0, g: float | None = None) -> Scenario:
    """``g=None`` takes the target's boundary trace as Dirichlet data; a number gives constant data."""
    grid = build_fine_grid(nx, ny or nx)
    domain = ParamDomain.beta(*theta)
    bounds = domain.bounds
    c = grid.centroids()
    k1, k2 = channel_field(c, seed=field_seed), inclusion_field(c, seed=field_seed + 1)
    K = AffineOperatorFamily((assemble_stiffness(grid, k1), assemble_stiffness(grid, k2)),
                             DistributedStiffnessTheta(), bounds)
    U = AffineOperatorFamily(tuple(distributed_target_fields(grid.nodes)),
                             DistributedTargetTheta(), bounds)
    blocks = build_blocks(grid, K, U, beta)
    blocks = apply_dirichlet(blocks, U if g is None else np.full(grid.n_nodes, float(g)))
    th = DistributedStiffnessTheta()(domain.mean)
    return Scenario("distributed-deterministic", grid, blocks, domain, th[0] * k1 + th[1] * k2,
                    True, {}, dict(nx=nx, ny=ny or nx, beta=beta, theta=list(theta),
                                   field_seed=field_seed, g=g))


def random_domain_scenario(nx: int = 40, ny: int | None = None, beta: float = 1e-4,
                           sigma: float = 0.1, n_terms: int = 5, n_eim: int = 100,
                           eim_tol: float = 1e-6, eim_max: int = 50, seed: int = 0,
                           g: float = 1.0) -> Scenario:
    grid = build_fine_grid(nx, ny or nx)
    domain = ParamDomain.uniform(-1.0, 1.0, n_terms)
    bounds = domain.bounds
    kl = kl_expand(1001, n_terms, sigma)
    amap = AffineMap(grid, kl)
    train = sample_parameters(domain, n_eim, seed)

    tensor = eim_build(RandomDomainTensor(amap), train, eim_tol, eim_max)
    target = eim_build(RandomDomainTarget(amap), train, eim_tol, eim_max)
    K = _eim_stiffness(grid, tensor, bounds, packed=True)
    U = AffineOperatorFamily(tuple(target.basis.T), target.coefficients, bounds)

    # det J = d x2 / d xi2 is affine in the KL coordinates
    _, det0, _ = amap.element_geometry(np.zeros(n_terms))
    dets = [det0]
    for n in range(n_terms):
        e = np.zeros(n_terms)
        e[n] = 1.0
        dets.append(amap.element_geometry(e)[1] - det0)
    coef = AffineInXi()
    M3 = AffineOperatorFamily(tuple(assemble_state_mass(grid, d) for d in dets), coef, bounds)
    Mc = AffineOperatorFamily(tuple(assemble_control_mass(grid, d) for d in dets), coef, bounds)
    C = AffineOperatorFamily(tuple(assemble_coupling(grid, d) for d in dets), coef, bounds)
    blocks = build_blocks(grid, K, U, beta, state_mass=M3, control_mass=Mc, coupling=C)
    blocks = apply_dirichlet(blocks, np.full(grid.n_nodes, float(g)))
    J0, d0, c0 = amap.element_geometry(np.zeros(n_terms))
    basis_kappa = pullback_tensor(J0, d0, random_domain_kappa(c0))
    return Scenario("random-domain", grid, blocks, domain, basis_kappa, False,
                    dict(tensor=tensor, target=target),
                    dict(nx=nx, ny=ny or nx, beta=beta, sigma=sigma, n_terms=n_terms,
                         n_eim=n_eim, eim_tol=eim_tol, eim_max=eim_max, seed=seed, g=g,
                         amap=amap))


def neumann_scenario(nx: int = 40, ny: int | None = None, beta: float = 1e-4, n_eim: int = 100,
                     eim_tol: float = 1e-6, eim_max: int = 50, seed: int = 0) -> Scenario:
    """Boundary control; the cost carries beta/2 on the control, so the blocks use beta/2."""
    grid = build_fine_grid(nx, ny or nx)
    domain = ParamDomain.beta(1.0, 1.0, m=2)
    bounds = domain.bounds
    train = sample_parameters(domain, n_eim, seed)
    kappa = eim_build(GaussianBump(grid.centroids()), train, eim_tol, eim_max)
    target = eim_build(SquaredDistance(grid.nodes), train, eim_tol, eim_max)
    K = _eim_stiffness(grid, kappa, bounds, packed=False)
    U = AffineOperatorFamily(tuple(target.basis.T), target.coefficients, bounds)
    blocks = build_neumann_blocks(grid, K, U, neumann_source(grid.nodes), beta / 2.0)
    basis_kappa = GaussianBump(grid.centroids())(domain.mean)
    return Scenario("neumann-boundary", grid, blocks, domain, basis_kappa, False,
                    dict(kappa=kappa, target=target),
                    dict(nx=nx, ny=ny or nx, beta=beta, n_eim=n_eim, eim_tol=eim_tol,
                         eim_max=eim_max, seed=seed))


SCENARIOS = {
    "distributed-deterministic": distributed_scenario,
    "random-domain": random_domain_scenario,
    "neumann-boundary": neumann_scenario,
}


def build_scenario(name: str, **settings) -> Scenario:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise InvalidArgument(f"unknown experiment {name!r}; choose from {sorted(SCENARIOS)}") from None
    return factory(**settings)
