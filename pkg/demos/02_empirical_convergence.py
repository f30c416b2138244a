"""
How fast does an empirical measure approach its law?
====================================================

N i.i.d. samples of a phase-space density form an empirical measure whose
MK1 distance to the density shrinks like a power of N. In six phase-space
dimensions the decay is slow, close to N^(-1/6).
"""

import numpy as np

from mflab.sampling import fg_envelope, fg_rate_experiment, reference_density

###############################################################################
# A standard Gaussian on R^3 x R^3. The distance is measured between two
# independent N-samples, which has the same rate as the distance to the law.

f = reference_density("gaussian_phase", 3)
n_list = [32, 64, 128, 256, 512]
r = fg_rate_experiment(f, n_list, trials=8, seed=0)

###############################################################################
# Means with standard errors, and the envelope c (N^(-1/q) + N^(-(1-1/q)))
# anchored at the smallest N for two moment orders.

_, env8, tol8, ok8 = r.envelope_check(8.0, n_stderr=2.0)
_, env3, tol3, ok3 = r.envelope_check(3.0, n_stderr=2.0)
print("    N     mean     stderr   env q=8   env q=3")
for n, m, s, e8, e3 in zip(n_list, r.means, r.stderrs, env8, env3):
    print(f"{n:5d}  {m:8.4f}  {s:8.4f}  {e8:8.4f}  {e3:8.4f}")
print(f"fitted log-log slope {r.slope:.3f}")
print(f"below q=8 envelope: {ok8}; below q=3 envelope: {ok3}")
print(f"moment M_3 = {f.moment:.4f}, envelope shape ratio at N=512: {fg_envelope(512, 8.0) / fg_envelope(32, 8.0):.3f}")
