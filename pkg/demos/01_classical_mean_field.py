"""
Classical mean-field dynamics
=============================

An N-particle system with a smooth pair potential and the Vlasov equation
started from its empirical measure describe the same motion. Two different
initial measures also stay close, at a rate set by the Lipschitz constant of
the force.
"""

import numpy as np

from mflab.classical import ParticleState, integrate_flow, total_energy
from mflab.potentials import builtin_potential
from mflab.sampling import reference_density, sample_iid
from mflab.transport import mk_distance
from mflab.vlasov import coupled_growth, dobrushin_rate, evolve_vlasov, first_moment, moment_growth_rate

###############################################################################
# A Gaussian pair potential in three dimensions and 64 particles drawn from a
# standard Gaussian in phase space.

V = builtin_potential("gaussian", [1.0, 1.0], 3)
f0 = sample_iid(reference_density("gaussian_phase", 3), 64, seed=1)
print(f"sup |grad V| = {V.sup_grad:.4f}, Lip(grad V) = {V.lip_grad:.4f}")

###############################################################################
# N-body flow versus the particle solution of the Vlasov equation on the same
# atoms. The empirical measure is transported exactly by the N-body flow.

state = ParticleState(f0.atoms[:, :3], f0.atoms[:, 3:])
traj = integrate_flow(state, V, t_end=1.0, dt=1e-3, save_every=100)
sol = evolve_vlasov(f0, V, t_end=1.0, dt=1e-3, save_every=100)
z = np.concatenate([traj.positions, traj.momenta], axis=2)
print(f"max phase-space deviation: {np.abs(z - sol.atoms).max():.3g}")
energies = [total_energy(traj.state(k), V) for k in range(len(traj))]
print(f"energy drift over t in [0, 1]: {max(energies) - min(energies):.3g}")

###############################################################################
# Stability in MK1: a second measure g0 is a shifted, rescaled sample. The
# distance at time t stays below its initial value times exp((1 + 2L) t).

g0 = sample_iid(reference_density("gaussian_phase", 3, sigma=1.2), 64, seed=2)
g0 = type(g0)(g0.atoms + 0.3)
d0, plan = mk_distance(f0, g0, 1, ground="sum")
times, D, sf, sg = coupled_growth(f0, g0, plan, V, 1.0, 1e-2, save_every=20, return_solutions=True)
print("\n   t     MK1(f,g)    bound      D(t)     M1(f)    M1 bound")
for k, t in enumerate(times):
    mk = mk_distance(sf.measure(k), sg.measure(k), 1, ground="sum")[0]
    print(f"{t:5.2f}  {mk:9.4f}  {d0 * np.exp(dobrushin_rate(V) * t):9.4f}  {D[k]:9.4f}"
          f"  {first_moment(sf.measure(k)):8.4f}  {first_moment(f0) * np.exp(moment_growth_rate(V) * t):8.4f}")
