"""Boundary control with pure Neumann conditions and a non-affine coefficient.

Run: python3 demos/05_neumann_boundary_control.py
"""
import numpy as np
import scipy.linalg as sla

from lgmor.fullorder import build_kkt, kkt_residual, solve_kkt
from lgmor.gmsfem import build_multiscale_space, project_kkt_local
from lgmor.greedy import greedy_train
from lgmor.grid import build_coarse_grid
from lgmor.scenarios import neumann_scenario

sc = neumann_scenario(nx=10)
kappa = sc.eim["kappa"]
print(f"EIM of exp(-|x - mu|^2/4): {kappa.Q} terms, sup residual history {kappa.history[:6].round(6)} ...")

system = build_kkt(sc.blocks, sc.mu_ref)
sv = sla.svdvals(system.matrix.toarray())
print(f"stiffness alone is singular, the coupled KKT matrix is not: sigma_min={sv[-1]:.3e}, "
      f"sigma_max={sv[0]:.3e}")
t = solve_kkt(system)
print(f"residuals {kkt_residual(system, t)}; optimal boundary control range "
      f"[{t.f.min():.3f}, {t.f.max():.3f}]")

sc = neumann_scenario(nx=30)
space = build_multiscale_space(sc.grid, build_coarse_grid(sc.grid, 5, 5), sc.basis_kappa, 5,
                               sc.blocks.state_dofs)
local = project_kkt_local(sc.blocks, space)
res = greedy_train(local, sc.sample(30, 0), tol=1e-6, n_max=6, mu_ref=sc.mu_ref)
mu = np.array([0.2, 0.9])
ref, red = sc.fine_solve(mu), res.model.solve(mu)
M = sc.state_mass(mu)
err = np.sqrt((ref.u - red.u) @ M @ (ref.u - red.u) / (ref.u @ M @ ref.u))
print(f"local-global model with N={res.spaces.N}: relative state error {err:.2e} at mu={mu}")
