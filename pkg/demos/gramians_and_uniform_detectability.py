"""
Output energy that fades: Gramians and uniform detectability
=============================================================

A scalar state that never moves, observed through a gain 1/k.  Every finite
window still sees the state, but the energy it sees shrinks like 1/k, so no
single (s, t, d, b) window works for all k.
"""

import numpy as np

from stocheck import (DetectabilityWindow, exact_observability_kN, observability_gramian,
                      search_uniform_detectability, stacked_output_map, uniform_detectability_check)
from stocheck.fixtures import inverse_index_output

sys = inverse_index_output()

# O[k+s, k] is just the sum of 1/i^2 over the window
for k in (1, 10, 100):
    O = observability_gramian(sys, k, k + 5).O[0, 0]
    print(f"k={k:4d}  O[k+5, k] = {O:.6f}   closed form {sum(1 / i**2 for i in range(k, k + 6)):.6f}")

# the stacked output map gives the same matrix as H'H
H = stacked_output_map(sys, 3, 6).rows
print("stacked H'H vs recursion:", (H.T @ H)[0, 0], observability_gramian(sys, 3, 6).O[0, 0])

# any fixed window eventually fails
w = DetectabilityWindow(s=2, t=0, d=0.5, b=0.1)
v = uniform_detectability_check(sys, w, range(1, 500))
print(f"\nwindow {w}: {v.holds}, first failing k = {v.failures[0].k}")

# a grid search over windows comes back empty too
v = search_uniform_detectability(sys, range(1, 990))
print("grid search:", v.holds, "witness k =", v.failures[0].k)

# yet the state is seen in every window, so it is exactly observable
print("K^0 exact observability:", exact_observability_kN(sys, 0, range(200)).holds)
print("smallest window energy at k=900:", np.round(observability_gramian(sys, 900, 900).O[0, 0], 9))
