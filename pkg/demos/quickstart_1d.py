"""
One-dimensional walkthrough
===========================

Build a multiscale space for the smooth harmonic potential on [0, 2], evolve
a WKB pulse with Crank-Nicolson in that space, and compare against a fine
Crank-Nicolson reference on a 4x refined grid with a 4x smaller step.
"""

# %%
import numpy as np

from cemschrod import (
    EvolutionConfig,
    NormOperators,
    WeightFunction,
    assemble_hamiltonian,
    assemble_mass,
    assemble_weighted_mass,
    build_auxiliary_space,
    build_grid,
    build_multiscale_space,
    default_oversampling,
    energy_density,
    make_initial_data,
    make_potential,
    position_density,
    prolong_nodal,
    refine,
    relative_errors,
    run_cn,
)

eps = 1 / 32
grid = build_grid(1, (0.0, 2.0), 128, 8)  # H = 1/64, h = 1/512
V = make_potential("smooth1d")
u0 = make_initial_data("wkb1d", eps)

# %%
# Operators: the Hamiltonian a(u, v), the L2 mass and the spectral weight s(u, v).
a = assemble_hamiltonian(grid, eps, V)
M = assemble_mass(grid)
S = assemble_weighted_mass(grid, WeightFunction(eps))

# %%
# Three eigenfunctions per coarse element span the auxiliary space. Lambda is the
# smallest eigenvalue left out, which controls the approximation quality.
aux = build_auxiliary_space(grid, a, S, l=3)
print(f"auxiliary dimension {aux.dimension}, Lambda = {aux.Lambda:.3f}")

# %%
# Localized basis functions on patches of m coarse layers.
m = default_oversampling(float(grid.H[0]), side=2.0)
ms = build_multiscale_space(grid, a, S, M, aux, m)
print(f"m = {m}, {ms.n_basis} basis functions for {grid.n_dofs} fine nodes")

# %%
# Crank-Nicolson in the multiscale space, started from the energy projection of u0.
cfg = EvolutionConfig(dt=1e-2, T=0.1, space="multiscale")
traj = run_cn(cfg, u0, grid, M, a, eps, ms=ms)
print("mass and energy drift:", traj.drift())

# %%
# Reference: fine Crank-Nicolson on a refined grid.
fine = refine(grid, 4)
a_f, M_f = assemble_hamiltonian(fine, eps, V), assemble_mass(fine)
ref = run_cn(EvolutionConfig(dt=2.5e-3, T=0.1, space="fine"), u0, fine, M_f, a_f, eps).final.values
u_cem = prolong_nodal(grid, fine, traj.final.fine())
rep = relative_errors(u_cem, ref, NormOperators.build(fine, eps, V, hamiltonian=a_f))
print(f"relative errors at T = 0.1: L2 {rep.l2:.3e}, H1 {rep.h1:.3e}, energy {rep.a:.3e}")

# %%
# Observables: position density at the nodes and energy density per fine element.
n_cem, n_ref = position_density(u_cem), position_density(ref)
e_ref = energy_density(ref, fine, eps, V, a_op=a_f)
print(f"max |n_cem - n_ref| = {np.abs(n_cem - n_ref).max():.3e}, total energy {e_ref.sum() * fine.element_volume:.6f}")
