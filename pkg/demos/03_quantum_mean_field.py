"""
Quantum mean field on a ring
============================

N bosons on a periodic grid start in a product of identical Gaussian packets.
Their one-particle reduced density operator stays close to the projector on
the Hartree solution, with an operator-norm error below (2/sqrt(N)) e^(2t|c|/s).
"""

import numpy as np

from mflab.potentials import builtin_potential
from mflab.quantum import (
    SpatialGrid,
    gaussian_packet,
    hartree_energy,
    hartree_evolve,
    klimontovich_expectation,
    mean_field_bound,
    mf_error,
    nbody_energy,
    nbody_schrodinger_evolve,
    product_state,
    projector_matrix,
    reduce_density,
)

###############################################################################
# A cosine interaction on a ring of length 2 pi sampled at 32 points.

grid = SpatialGrid(32, 2 * np.pi)
V = builtin_potential("cosine", [1.0, 2 * np.pi], 1)
s, t_end = 1.0, 0.5
psi0 = gaussian_packet(grid, 0.0, 0.5, 0.5, s)

hartree = hartree_evolve(psi0, V, t_end=t_end, dt=1e-3, save_every=100)
print(f"Hartree energy {hartree_energy(psi0, V):.8f} -> {hartree_energy(hartree[-1], V):.8f}")

###############################################################################
# Exact N-body evolution for N = 2, 3, 4 and the mean-field error at t = 0.5.

print("\nN   ||R_N:1 - |psi><psi|||   bound    1 - <psi|R|psi>   energy drift")
for n in (2, 3, 4):
    Psi0 = product_state([psi0] * n)
    Psi = nbody_schrodinger_evolve(Psi0, V, t_end=t_end, dt=1e-3, save_every=500)[-1]
    op, gap = mf_error(Psi, hartree[-1])
    drift = abs(nbody_energy(Psi, V) - nbody_energy(Psi0, V))
    print(f"{n}   {op:20.6f}   {mean_field_bound(n, t_end, V, s):7.4f}   {gap:14.3e}   {drift:10.2e}")

###############################################################################
# Duality: the quantum Klimontovich observable and the marginal give the same
# number for any one-particle operator, here a projector.

phi = gaussian_packet(grid, 1.0, 0.0, 0.3, s)
B = projector_matrix(phi)
print(f"\n<Psi|M(|phi><phi|)|Psi> = {klimontovich_expectation(Psi, B).real:.12f}")
print(f"<phi|R_N:1|phi>         = {reduce_density(Psi).expectation(B).real:.12f}")
