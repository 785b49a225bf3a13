"""End-to-end acceptance checks, one test per criterion.

Every test prints a single ``[criterion k] PASS|FAIL`` line with the measured
numbers before asserting, and the lines are repeated in the terminal summary.
"""
import dataclasses
import time
import warnings

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from lgmor.assembly import assemble_coupling, assemble_stiffness
from lgmor.experiments import (ExperimentConfig, coarse_study, evaluate, l_study, make_scenario,
                               n_study, offline, reference_solutions, timing_harness, beta_study)
from lgmor.fullorder import build_kkt, cost_and_gradient, kkt_residual, solve_kkt
from lgmor.gmsfem import build_multiscale_space, identity_space, project_kkt_local
from lgmor.greedy import direct_residual_norms, greedy_train
from lgmor.grid import build_coarse_grid, build_fine_grid
from lgmor.rb import empty_spaces, project_reduced
from lgmor.scenarios import distributed_scenario, neumann_scenario, random_domain_kappa
from lgmor.stochastic import (AffineMap, kl_expand, pullback_tensor, realize_boundary,
                              stochastic_map)
from lgmor.stochastic.kl import exp_kernel, trapezoid_weights

RESULTS: list[str] = []


def report(k: int, ok: bool, text: str, seconds: float, limit: float):
    ok = bool(ok) and seconds < limit
    line = f"[criterion {k}] {'PASS' if ok else 'FAIL'} {text} ({seconds:.1f} s, limit {limit:.0f} s)"
    RESULTS.append(line)
    print("\n" + line)
    assert ok, line


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def nonincreasing(v):
    return bool(np.all(np.diff(np.asarray(v)) <= 0.0))


def fmt(v):
    return "[" + ", ".join(f"{x:.3e}" for x in v) + "]"


DIST = ExperimentConfig(nx=60, ny=60, ncx=6, ncy=6, L=5, n_max=6, n_train=50, n_test=20,
                        seed=0, test_seed=1, tol=1e-12)


@pytest.fixture(scope="module")
def dist():
    sc = make_scenario(DIST)
    mus = sc.sample(DIST.n_test, DIST.test_seed)
    t0 = time.perf_counter()
    refs = reference_solutions(sc, mus)
    return sc, mus, refs, time.perf_counter() - t0


def test_criterion_01_kkt_gradient():
    t0 = time.perf_counter()
    sc = distributed_scenario(nx=40)
    sysm = build_kkt(sc.blocks, sc.mu_ref)
    rng = np.random.default_rng(0)
    f = rng.normal(size=sysm.n_control)
    _, grad = cost_and_gradient(sysm, f)
    errs = []
    for _ in range(5):
        d = rng.normal(size=f.size)
        h = 1e-3 * np.linalg.norm(f) / np.linalg.norm(d)
        fd = (cost_and_gradient(sysm, f + h * d)[0] - cost_and_gradient(sysm, f - h * d)[0]) / (2 * h)
        errs.append(abs(fd - grad @ d) / abs(fd))
    report(1, max(errs) <= 1e-5, f"adjoint gradient vs central FD on 40x40: max rel err {max(errs):.2e} "
           f"(tol 1e-5)", time.perf_counter() - t0, 10)


def test_criterion_02_identity_reduction():
    t0 = time.perf_counter()
    sc = distributed_scenario(nx=20)
    local = project_kkt_local(sc.blocks, identity_space(sc.blocks))
    spaces = empty_spaces(local, sc.mu_ref)
    full = dataclasses.replace(spaces, Z1=np.eye(local.M), Z2=np.eye(local.n_control))
    model = project_reduced(local, full)
    worst = 0.0
    for mu in sc.sample(5, 2):
        ref = sc.fine_solve(mu)
        red = model.solve(mu)
        worst = max(worst, rel(red.u, ref.u), rel(red.f, ref.f), rel(red.lam, ref.lam))
    report(2, worst <= 1e-10, f"R=I, Z=I local-global vs fine KKT on 20x20, 5 samples: max rel diff "
           f"{worst:.2e} (tol 1e-10)", time.perf_counter() - t0, 5)


def test_criterion_03_snapshot_reproduction():
    t0 = time.perf_counter()
    sc = distributed_scenario(nx=30)
    space = build_multiscale_space(sc.grid, build_coarse_grid(sc.grid, 5, 5), sc.basis_kappa, 4,
                                   sc.blocks.state_dofs)
    local = project_kkt_local(sc.blocks, space)
    res = greedy_train(local, sc.sample(20, 0), tol=1e-12, n_max=5, mu_ref=sc.mu_ref)
    worst = 0.0
    for mu in res.spaces.samples:
        snap = local.solve(mu).fine
        red = res.model.solve(mu)
        worst = max(worst, rel(red.u, snap.u), rel(red.f, snap.f), rel(red.lam, snap.lam))
    report(3, worst <= 1e-8, f"downscaled online solution vs stored local snapshot at all "
           f"{res.spaces.N} training samples: max rel diff {worst:.2e} (tol 1e-8)",
           time.perf_counter() - t0, 5)


def test_criterion_04_greedy_decay(dist):
    sc, mus, refs, t_ref = dist
    t0 = time.perf_counter()
    off = offline(DIST, sc)
    eps = off.greedy.eps
    rows = {r["N"]: r for r in n_study(DIST, mus, sc, refs, off)}
    decreasing = bool(np.all(np.diff(eps[:5]) < 0))
    ratio = rows[6]["e2_u"] / rows[2]["e2_u"]
    local_ratio = rows[6]["e2_u_local"] / rows[2]["e2_u_local"]
    e2 = [rows[n]["e2_u"] for n in sorted(rows)]
    report(4, decreasing and ratio < 0.25,
           f"60x60/6x6/L=5/n_train=50: eps_N={fmt(eps)} strictly decreasing N=1..5: {decreasing}; "
           f"fine-reference e2_u(N)={fmt(e2)}, e2_u(6)/e2_u(2)={ratio:.3f} (needs < 0.25); "
           f"local-model-reference ratio {local_ratio:.2e}",
           time.perf_counter() - t0 + t_ref, 300)


def test_criterion_05_coarse_refinement(dist):
    sc, mus, refs, t_ref = dist
    t0 = time.perf_counter()
    cfg = dataclasses.replace(DIST, n_max=5, coarse_list=(5, 6, 10))
    rows = coarse_study(cfg, mus, sc, refs)
    eu, ef = [r["e2_u"] for r in rows], [r["e2_f"] for r in rows]
    Ns = [r["N"] for r in rows]
    ok = nonincreasing(eu) and nonincreasing(ef) and Ns == [5, 5, 5]
    report(5, ok, f"H=1/5,1/6,1/10 at L=5, N={Ns}: e2_u={fmt(eu)}, e2_f={fmt(ef)} non-increasing",
           time.perf_counter() - t0 + t_ref, 600)


def test_criterion_06_local_enrichment(dist):
    sc, mus, refs, t_ref = dist
    t0 = time.perf_counter()
    cfg = dataclasses.replace(DIST, n_max=5, L_list=(2, 3, 4, 5, 6))
    rows = l_study(cfg, mus, sc, refs)
    eu, ef, el = ([r[k] for r in rows] for k in ("e2_u", "e2_f", "e2_lam"))
    ok = nonincreasing(eu) and nonincreasing(ef) and nonincreasing(el)
    report(6, ok, f"L=2..6 at H=1/6, N=5: e2_u={fmt(eu)}, e2_f={fmt(ef)}, e2_lam={fmt(el)} "
           f"non-increasing", time.perf_counter() - t0 + t_ref, 600)


def test_criterion_07_beta_study(dist):
    sc, mus, _, _ = dist
    t0 = time.perf_counter()
    cfg = dataclasses.replace(DIST, betas=(1e-2, 2e-4, 0.5e-5))
    rows = beta_study(cfg, mus)
    fn, J = [r["f_norm"] for r in rows], [r["J_min"] for r in rows]
    ok = bool(np.all(np.diff(fn) > 0)) and J[0] > J[1]
    report(7, ok, f"beta=1e-2,2e-4,5e-6: |f_opt|={fmt(fn)} strictly increasing, J_min={fmt(J)} "
           f"with J(1e-2) > J(2e-4)", time.perf_counter() - t0, 120)


def test_criterion_08_online_speedup():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(nx=100, ny=100, ncx=5, ncy=5, L=5, n_max=8, n_train=50, tol=1e-12)
    sc = make_scenario(cfg)
    off = offline(cfg, sc)
    mus = sc.sample(100, 1)
    t = timing_harness(off.model, sc, mus, fine_repeats=1, online_repeats=5)
    N = off.greedy.spaces.N
    ok = t["speedup"] >= 10 and off.model.size == 5 * N and N <= 8
    report(8, ok, f"100x100 fine vs 5x5/L=5 local-global with N={N}: fine {t['fine_mean']:.3e} s, "
           f"online {t['online_mean']:.3e} s, speedup {t['speedup']:.1f}x (needs >= 10); reduced "
           f"size {off.model.size} = 5N: {off.model.size == 5 * N}", time.perf_counter() - t0, 600)


def test_criterion_09_kl_expansion():
    t0 = time.perf_counter()
    kl = kl_expand(1000, n_terms=20, sigma=1.0)
    lam = kl.eigenvalues
    trace = lam.sum()
    x2 = np.linspace(0, 1, 2000)
    sw = np.sqrt(trapezoid_weights(x2))
    dense = np.linalg.eigvalsh(sw[:, None] * exp_kernel(x2, x2) * sw[None, :])[::-1]
    digits = abs(lam[0] - dense[0]) / dense[0]
    ok_sign = bool(np.all(lam > 0) and np.all(np.diff(lam) < 0))
    ok = ok_sign and abs(trace - 1.0) <= 0.01 and digits < 5e-4
    report(9, ok, f"1000-point Nystrom: positive decreasing {ok_sign}; sum of 20 eigenvalues "
           f"{trace:.5f} (needs within 1% of 1); lambda_1={lam[0]:.6f} vs 2000-point oracle "
           f"{dense[0]:.6f} (rel {digits:.1e})", time.perf_counter() - t0, 30)


def _deformed_mesh_energy(grid, s_bottom):
    """Oracle on a physical mesh with straight vertical stretching x2 = s + xi2 (1 - s)."""
    x1 = grid.nodes[:, 0]
    s = s_bottom[np.round(x1 * grid.nx).astype(int)]
    nodes = np.column_stack([x1, s + grid.nodes[:, 1] * (1.0 - s)])
    cent = nodes[grid.elements].mean(axis=1)
    K = assemble_stiffness(grid, random_domain_kappa(cent), nodes=nodes)
    b = assemble_coupling(grid, nodes=nodes) @ np.ones(grid.n_elements)
    I = grid.interior
    u = spla.spsolve(K[I][:, I].tocsc(), b[I])
    return u @ (K[I][:, I] @ u)


def _mapped_energy(grid, dmap):
    T = pullback_tensor(dmap.jacobian, dmap.det, random_domain_kappa(dmap.physical_centroids()))
    K = assemble_stiffness(grid, T)
    b = assemble_coupling(grid) @ dmap.det
    I = grid.interior
    u = spla.spsolve(K[I][:, I].tocsc(), b[I])
    return u @ (K[I][:, I] @ u)


def test_criterion_10_random_domain():
    t0 = time.perf_counter()
    grid = build_fine_grid(40, 40)
    ident = stochastic_map(np.zeros(grid.nx + 1), grid)
    id_err = max(np.abs(ident.coords - grid.nodes).max(), np.abs(ident.jacobian - np.eye(2)).max())
    kl = kl_expand(1001, 5, 0.1)
    amap = AffineMap(grid, kl)
    xis = np.random.default_rng(0).uniform(-1, 1, size=(100, 5))
    min_det = min(amap.element_geometry(x)[1].min() for x in xis)
    xb = grid.nodes[:grid.nx + 1, 0]
    s = realize_boundary(kl, xis[0], xb)
    e_map = _mapped_energy(grid, stochastic_map(s, grid))
    e_ref = _deformed_mesh_energy(grid, s)
    gap = abs(e_map - e_ref) / e_ref
    ok = id_err <= 1e-12 and min_det > 0 and gap <= 0.02
    report(10, ok, f"identity map error {id_err:.1e}; min det J over 100 draws {min_det:.3f}; "
           f"mapped energy {e_map:.6e} vs deformed-mesh {e_ref:.6e} (rel {gap:.2e}, tol 2e-2)",
           time.perf_counter() - t0, 300)


def test_criterion_11_neumann():
    t0 = time.perf_counter()
    sc = neumann_scenario(nx=10, n_eim=100, eim_tol=1e-6, eim_max=25)
    mu = sc.mu_ref
    sysm = build_kkt(sc.blocks, mu)
    sv = sla.svdvals(sysm.matrix.toarray())
    t = solve_kkt(sysm)
    res = kkt_residual(sysm, t).max()
    sur = sc.eim["kappa"]
    ok = (sv[-1] > sv.size * np.finfo(float).eps * sv[0] and res <= 1e-9
          and sur.converged and sur.history[-1] < 1e-6 and sur.Q <= 25)
    report(11, ok, f"10x10 pure-Neumann KKT: sigma_min {sv[-1]:.3e} (sigma_max {sv[0]:.3e}); "
           f"residual {res:.1e}; kappa EIM {sur.Q} terms, sup residual {sur.history[-1]:.1e} over "
           f"100 samples", time.perf_counter() - t0, 300)


def test_criterion_12_estimator_equality():
    t0 = time.perf_counter()
    sc = distributed_scenario(nx=12)
    space = build_multiscale_space(sc.grid, build_coarse_grid(sc.grid, 3, 3), sc.basis_kappa, 3,
                                   sc.blocks.state_dofs)
    local = project_kkt_local(sc.blocks, space)
    res = greedy_train(local, sc.sample(15, 0), tol=1e-12, n_max=4, mu_ref=sc.mu_ref)
    worst = 0.0
    for mu in sc.sample(20, 7):
        a = res.estimator.components(mu)
        b = direct_residual_norms(local, res.model, mu, res.mu_ref)
        worst = max(worst, float(np.max(np.abs(a - b) / b)))
    report(12, worst <= 1e-9, f"offline/online dual norms vs direct Riesz solves on 12x12, N="
           f"{res.spaces.N}, 20 samples: max rel diff {worst:.2e} (tol 1e-9)",
           time.perf_counter() - t0, 60)


