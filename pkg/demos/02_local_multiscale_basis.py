"""Local spectral bases: harmonic snapshots, eigenproblems and partition-of-unity pasting.

Run: python3 demos/02_local_multiscale_basis.py
"""
from lgmor.gmsfem import build_multiscale_space, harmonic_snapshots, local_spectral_basis
from lgmor.gmsfem import project_kkt_local
from lgmor.grid import build_coarse_grid, partition_of_unity, pou_gradient_weight
from lgmor.scenarios import distributed_scenario
from lgmor.stochastic import relative_error

sc = distributed_scenario(nx=40)
coarse = build_coarse_grid(sc.grid, 5, 5)
kappa = sc.basis_kappa

# One neighborhood in detail: its snapshot space and lowest local eigenvalues.
i = 14
snap = harmonic_snapshots(sc.grid, coarse, i, kappa)
weight = pou_gradient_weight(coarse, sc.grid, partition_of_unity(coarse, sc.grid))
basis = local_spectral_basis(sc.grid, snap, kappa, 8, weight)
print(f"neighborhood {i}: {snap.size} snapshots; lowest eigenvalues {basis.eigenvalues.round(4)}")
print("small eigenvalues flag high-conductivity paths that cross the neighborhood")

# Accuracy of the locally reduced optimal control problem as the local basis grows.
mu = sc.mu_ref
ref = sc.fine_solve(mu)
M3 = sc.state_mass(mu)
for L in (1, 2, 3, 4, 6, 8):
    space = build_multiscale_space(sc.grid, coarse, kappa, L, sc.blocks.state_dofs)
    loc = project_kkt_local(sc.blocks, space).solve(mu).fine
    print(f"L={L}: {space.M:4d} multiscale functions, relative L2 state error "
          f"{relative_error(ref.u, loc.u, M3):.3e}")
