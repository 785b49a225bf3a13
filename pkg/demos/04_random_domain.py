"""Uncertain bottom boundary: KL expansion, harmonic map to the unit square, EIM and moments.

Run: python3 demos/04_random_domain.py
"""
import warnings

import numpy as np

from lgmor.gmsfem import build_multiscale_space, project_kkt_local
from lgmor.greedy import greedy_train
from lgmor.grid import build_coarse_grid
from lgmor.scenarios import random_domain_scenario
from lgmor.stochastic import kl_expand, moments, realize_boundary

kl = kl_expand(1001, n_terms=5, sigma=0.1)
print("KL eigenvalues of exp(-|x - z|):", kl.eigenvalues.round(5))
xs = np.linspace(0, 1, 6)
print("one realization of the bottom:", realize_boundary(kl, np.array([1, -1, 0.5, 0, 0.2]), xs).round(4))

with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    sc = random_domain_scenario(nx=30, n_eim=60, eim_max=40)
for w in caught:
    print("note:", w.message)
for name, sur in sc.eim.items():
    print(f"EIM {name}: {sur.Q} terms, training sup residual {sur.history[-1]:.2e}, "
          f"converged={sur.converged}")

space = build_multiscale_space(sc.grid, build_coarse_grid(sc.grid, 5, 5), sc.basis_kappa, 5,
                               sc.blocks.state_dofs)
local = project_kkt_local(sc.blocks, space)
res = greedy_train(local, sc.sample(40, 0), tol=1e-6, n_max=8, mu_ref=sc.mu_ref)
print(f"greedy picked N={res.spaces.N} samples, final estimate {res.eps[-1]:.2e}")

samples = sc.sample(200, 3)
states = np.array([res.model.solve(x).u for x in samples])
mo = moments(states)
centre = sc.grid.node_id(15, 15)
print(f"state at the centre node over {mo.n} samples: mean {mo.mean[centre]:.5f}, "
      f"std {mo.std[centre]:.2e}")
