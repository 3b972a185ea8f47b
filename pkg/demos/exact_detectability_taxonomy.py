"""
Unobservable states and where they go
======================================

Exact detectability asks one question of each window: does every state that
leaves no trace in the output decay anyway?  Three scalar systems show how
the answer depends on the window length.
"""

from stocheck import (exact_detectability_kinf, exact_detectability_kN, kwft_probe,
                      unobservable_subspace)
from stocheck.fixtures import alternating_output, period_three_noise, square_index_output

# %%
# Alternating output: H = 1, 0, 1, 0, ...  A zero-length window started at an
# odd step sees nothing, and F = 1 keeps the state alive.
alt = alternating_output()
for N in (0, 1):
    v = exact_detectability_kN(alt, N, range(10))
    where = [w.k for w in v.failures]
    print(f"alternating  K^{N}: {v.holds}  failing k: {where}")

# %%
# Squares: H = 1 only at k = 1, 4, 9, 16, ...  The gaps grow, so every fixed
# window misses the output somewhere, but an unbounded one never does.
sq = square_index_output()
for N in (0, 5, 30):
    v = exact_detectability_kN(sq, N, range(1200))
    print(f"squares      K^{N}: {v.holds}  first gap at k = {v.failures[0].k}")
v = exact_detectability_kinf(sq, range(31), horizon_cap=1200)
print(f"squares      K^inf: {v.holds} (range limited: {v.range_limited})")

# the window needed after k = j^2 + 1 is the distance to the next square
ks = [j * j + 1 for j in range(1, 8)]
probe = kwft_probe(sq, ks, cap=300)
print("minimal windows:", {k: probe.windows[k] for k in ks}, "unbounded pattern:", probe.wft_pattern)

# %%
# Period-3 noise: G = 3 every step, F = H = 1 only at phase 0.  A three-step
# window always crosses phase 0, so no state is unobservable.
p3 = period_three_noise()
print("\nperiod three kernels at N=3:", [unobservable_subspace(p3, k, 3).dim for k in range(3)])
print("period three K^3:", exact_detectability_kN(p3, 3, range(3), mode="periodic").holds)
