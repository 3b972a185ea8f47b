"""Small scalar systems with known detectability structure, used by the tests and demos."""

import numpy as np

from .system import SystemSchedule, Tail, scalar_schedule

__all__ = [
    "inverse_index_output", "alternating_output", "square_index_output",
    "period_three_noise", "period_three_noise_literal", "random_system",
]


def inverse_index_output(length=1000):
    """F = 1, G = 0, H[k] = 1/k (H[0] = 1), finite schedule.

    Every finite-window Gramian is positive, yet the output energy over any
    fixed window vanishes as k grows.
    """
    H = [1.0] + [1.0 / k for k in range(1, length)]
    return scalar_schedule([1.0] * length, [0.0] * length, H, Tail.finite())


def alternating_output():
    """F = 1, G = 0, H = 1 at even k and 0 at odd k (period 2)."""
    return scalar_schedule([1.0, 1.0], [0.0, 0.0], [1.0, 0.0], Tail.periodic(2))


def square_index_output(length=1500):
    """F = 1, G = 0, H[k] = 1 when k is a positive perfect square, else 0 (finite)."""
    squares = {j * j for j in range(1, int(np.sqrt(length)) + 2)}
    H = [1.0 if k in squares else 0.0 for k in range(length)]
    return scalar_schedule([1.0] * length, [0.0] * length, H, Tail.finite())


def period_three_noise():
    """G = 3 always; F = H = 1 at k = 0 mod 3 and 0 otherwise (period 3 from k = 0)."""
    return scalar_schedule([1.0, 0.0, 0.0], [3.0] * 3, [1.0, 0.0, 0.0], Tail.periodic(3))


def period_three_noise_literal():
    """Same coefficients, but F = H = 1 only at k = 3, 6, ...; at k = 0 both vanish.

    The k = 0 entry breaks periodicity, so this one is a finite schedule.
    """
    length = 3 * 200
    F = [1.0 if k % 3 == 0 and k > 0 else 0.0 for k in range(length)]
    return scalar_schedule(F, [3.0] * length, list(F), Tail.finite())


def random_system(rng, n, m=1, p=1, rho=0.7, noise=0.3, length=1, tail=None, control=True):
    """Random schedule with F scaled to spectral radius ``rho`` and G ~ noise * N(0, 1/n)."""
    entries = []
    for _ in range(length):
        F = rng.standard_normal((n, n))
        r = max(abs(np.linalg.eigvals(F)))
        F = F * (rho / r) if r > 0 else F
        G = noise * rng.standard_normal((n, n)) / np.sqrt(n)
        H = rng.standard_normal((m, n))
        e = {"F": F, "G": G, "H": H}
        if control:
            e["M"] = rng.standard_normal((n, p))
            e["N"] = 0.1 * rng.standard_normal((n, p))
        entries.append(e)
    if tail is None:
        tail = Tail.constant() if length == 1 else Tail.periodic(length)
    return SystemSchedule(tuple(entries), tail)
