"""
Phase-space pictures of quantum states
======================================

The Wigner function of a density operator can be negative; its Gaussian
smoothing, the Husimi function, cannot. The first excited oscillator state
shows both at the origin of phase space.
"""

import numpy as np

from mflab.quantum import DensityOperator
from mflab.semiclassical import (
    coherent_state,
    excited_state,
    husimi_coherent,
    husimi_transform,
    semiclassical_grid,
    toeplitz_quantize,
    wigner_transform,
)
from mflab.transport import EmpiricalMeasure

###############################################################################
# The excited state for three values of the semiclassical parameter.

print(" eps    W(0,0)      -1/(pi eps)   Wigner mass   Husimi min")
for eps in (0.1, 0.5, 1.0):
    g = semiclassical_grid(eps)
    R = DensityOperator.pure(excited_state(g, eps))
    W = wigner_transform(R, eps)
    H = husimi_transform(R, eps, W)
    print(f"{eps:4.1f}  {W.at(0, 0):10.6f}  {-1 / (np.pi * eps):10.6f}  {W.mass():12.9f}  {H.values.min():11.2e}")

###############################################################################
# A coherent state has a Gaussian Husimi function of variance eps per
# coordinate. Two routes compute it: smoothing the Wigner grid, and evaluating
# <z|R|z> / (2 pi eps) from explicit coherent states.

eps = 0.5
g = semiclassical_grid(eps)
R = DensityOperator.pure(coherent_state(g, 1.0, -0.5, eps))
H = husimi_transform(R, eps)
mean, cov = H.moments()
print(f"\ncoherent state at (1, -0.5): Husimi mean {np.round(mean, 8)}, covariance diag {np.round(np.diag(cov), 8)}")
Hc = husimi_coherent(R, eps, H.x[::8], H.xi[::8])
print(f"smoothing vs coherent route: max difference {np.abs(H.values[::8, ::8] - Hc.values).max():.2e}")

###############################################################################
# Töplitz quantization turns a measure into a density operator: a mixture of
# coherent projectors, positive with unit trace.

mu = EmpiricalMeasure(np.array([[-1.0, 0.0], [1.0, 0.5], [0.0, -1.0]]), [0.5, 0.3, 0.2])
T = toeplitz_quantize(mu, eps, g)
print(f"Töplitz state: trace {T.trace():.12f}, smallest eigenvalue {T.eigenvalues().min():.2e}")
