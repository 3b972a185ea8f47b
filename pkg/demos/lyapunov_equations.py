"""
Generalized Lyapunov equations
===============================

P_k = F_k' P_{k+1} F_k + G_k' P_{k+1} G_k + H_k' H_k, solved backward from a
horizon, as a limit, or directly for a periodic fixed point, then used to
certify stability.
"""

import numpy as np

from stocheck import (Tail, esms_monodromy, gle_backward, gle_limit, gle_periodic_fixed_point,
                      glo_spectrum, observability_gramian, verify_lyapunov_theorem)
from stocheck.fixtures import random_system

rng = np.random.default_rng(3)
sys = random_system(rng, 2, length=3, tail=Tail.periodic(3), rho=0.6, noise=0.3, control=False)
print("monodromy:", esms_monodromy(sys).verdict)

# a finite-horizon solution is the observability Gramian of the remaining window
back = gle_backward(sys, 0, 8)
print("P[0] from horizon 8 equals O[7, 0]:", np.allclose(back.at(0), observability_gramian(sys, 0, 7).O))

lim = gle_limit(sys)
fp = gle_periodic_fixed_point(sys)
print(f"limit after T = {lim.T}, uniqueness gap {lim.uniqueness_gap:.1e}")
print(f"fixed point residual {fp.max_residual:.1e}, agrees with limit:",
      all(np.allclose(lim.at(k), fp.at(k)) for k in range(3)))

v = verify_lyapunov_theorem("T5.3.1", sys)
for h in v.hypotheses:
    print(f"  [{'x' if h.passed else ' '}] {h.name}")
print("conclusion:", v.conclusion)

# %%
# Time-invariant case: the spectrum of L(Z) = F Z F' + G Z G' and its PSD
# eigenvector at the spectral radius.
F = np.array([[0.5, 0.4], [0.0, 0.6]])
G = np.array([[0.3, 0.0], [0.2, 0.3]])
glo = glo_spectrum(F, G)
print(f"\nbeta = {glo.beta:.4f}, PSD witness found: {glo.witness_found}")
print(np.round(glo.X, 4))
