"""Global reduced basis on top of the multiscale space: greedy training and online solves.

Run: python3 demos/03_greedy_reduced_basis.py
"""
import time

import numpy as np

from lgmor.gmsfem import build_multiscale_space, project_kkt_local
from lgmor.greedy import direct_residual_norms, greedy_train
from lgmor.grid import build_coarse_grid
from lgmor.scenarios import distributed_scenario
from lgmor.stochastic import error_metrics

sc = distributed_scenario(nx=40)
space = build_multiscale_space(sc.grid, build_coarse_grid(sc.grid, 5, 5), sc.basis_kappa, 5,
                               sc.blocks.state_dofs)
local = project_kkt_local(sc.blocks, space)
print(f"local model: {local.M} multiscale functions for {sc.blocks.n_state} fine state dofs")

train = sc.sample(40, seed=0)
res = greedy_train(local, train, tol=1e-6, n_max=6, mu_ref=sc.mu_ref)
for rec in res.log:
    print(f"N={rec['iter']}: picked mu={rec['mu'][0]:.4f}, max estimate over the pool {rec['eps']:.3e}")

model = res.model
print(f"reduced saddle system is {model.size}x{model.size} (5N with N={res.spaces.N})")

# The online estimate matches a brute-force evaluation of the residual dual norms.
mu = np.array([0.123])
print("estimator components:", res.estimator.components(mu))
print("direct evaluation:   ", direct_residual_norms(local, model, mu, res.mu_ref))

test = sc.sample(10, seed=1)
t0 = time.perf_counter()
refs = [sc.fine_solve(m) for m in test]
t_fine = (time.perf_counter() - t0) / len(test)
t0 = time.perf_counter()
reds = [model.solve(m) for m in test]
t_red = (time.perf_counter() - t0) / len(test)
err = error_metrics(refs, reds, sc.state_mass(test[0]), sc.control_mass(test[0]))
print(f"mean relative errors vs fine solutions: u {err['e2_u']:.3e}, f {err['e2_f']:.3e}, "
      f"lambda {err['e2_lam']:.3e}")
print(f"fine solve {t_fine * 1e3:.1f} ms, online solve with downscaling {t_red * 1e3:.2f} ms")
