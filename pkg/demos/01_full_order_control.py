"""Distributed optimal control with a high-contrast coefficient, solved on the fine grid.

Run: python3 demos/01_full_order_control.py
"""
import numpy as np

from lgmor.fullorder import build_kkt, cost_and_gradient, kkt_residual, solve_kkt
from lgmor.scenarios import distributed_scenario

sc = distributed_scenario(nx=40, beta=1e-2)
print(f"fine grid {sc.grid.nx}x{sc.grid.ny}: {sc.blocks.n_state} interior state dofs, "
      f"{sc.blocks.n_control} control dofs (one per element)")

mu = sc.mu_ref
system = build_kkt(sc.blocks, mu)
print(f"saddle-point system of size {system.size}, ordered (control, state, adjoint)")

triple = solve_kkt(system)
print(f"optimal cost J = {triple.J:.6e}; block residuals {kkt_residual(system, triple)}")

# The reduced cost J(f) has the adjoint gradient 2 beta M f - C^T lambda(f).
rng = np.random.default_rng(0)
f = rng.normal(size=system.n_control)
J, grad = cost_and_gradient(system, f)
d = rng.normal(size=f.size)
h = 1e-3
fd = (cost_and_gradient(system, f + h * d)[0] - cost_and_gradient(system, f - h * d)[0]) / (2 * h)
print(f"directional derivative: adjoint {grad @ d:.8e}, central difference {fd:.8e}")

# Smaller regularization buys a closer match to the target at the price of a larger control.
for beta in (1e-2, 1e-3, 1e-4):
    t = distributed_scenario(nx=40, beta=beta).fine_solve(mu)
    Mc = sc.control_mass(mu)
    print(f"beta={beta:.0e}: J={t.J:.4e}  |f|={np.sqrt(t.f @ Mc @ t.f):.4e}")
