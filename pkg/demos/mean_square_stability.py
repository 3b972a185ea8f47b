"""
Mean-square stability three ways
=================================

The second moment X_k = E[x_k x_k'] evolves linearly, so stability of the
noisy system is a spectral question about the moment operator.  Monte Carlo
agrees with it, path for path reproducibly.
"""

import numpy as np

from stocheck import (NoiseModel, esms_empirical, esms_monodromy, esms_spectral,
                      output_injection_loop, propagate_second_moment, simulate)
from stocheck.fixtures import period_three_noise, random_system

rng = np.random.default_rng(0)
sys = random_system(rng, 2, rho=0.9, noise=0.05)

cert = esms_spectral(sys)
print(f"spectral: {cert.verdict}  rho = {cert.evidence.rho:.4f}  beta = {cert.beta:.3f}  lam = {cert.lam:.4f}")
print("empirical fit:", esms_empirical(sys, horizon=100).verdict)

x0 = np.array([1.0, -0.5])
exact = propagate_second_moment(sys, np.outer(x0, x0), 0, 30).traces
est = simulate(sys, x0, T=30, paths=50_000, noise=NoiseModel("gaussian", 7))
print("\n  k   exact E|x|^2   Monte Carlo   (std err)")
for k in (0, 5, 10, 20, 30):
    print(f"{k:3d}   {exact[k]:11.6f}   {est.mean_sq_state[k]:11.6f}   ({est.stderr_state[k]:.1e})")

# %%
# Periodic systems: the product of the per-step moment maps over a period.
# Output injection cannot help the period-3 system: the noise term is never
# touched by the gain, and it multiplies the moment by 9 on each F = 0 step.
for K in (-1.0, 0.0, 2.5):
    loop = output_injection_loop(period_three_noise(), [np.array([[K]])])
    c = esms_monodromy(loop)
    print(f"gain {K:+.1f}: {c.verdict}, per-period factor {c.evidence.rho:.0f}")
