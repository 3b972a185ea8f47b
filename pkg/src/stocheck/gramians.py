"""Transition-energy and observability Gramians.

For a deterministic start x[k] = x,

    x' M[l, k] x = E|x[l]|^2,        x' O[l, k] x = sum_{i=k}^{l} E|y[i]|^2.

Both are computed with an O(n^3)-per-step backward recursion.  The stacked
maps phi[l, k] (2^(l-k) n rows) and H[l, k] whose Gramians they are, are
built explicitly only for short windows, as an independent cross-check.
"""

from dataclasses import dataclass

import numpy as np

from .errors import WindowTooLarge

__all__ = [
    "TransitionGramian", "ObservabilityGramian", "StackedMap", "STACK_CAP",
    "transition_gramian", "observability_gramian", "stacked_transition",
    "stacked_output_map", "gramian_crosscheck", "is_psd", "symmetrize",
]

STACK_CAP = 12
PSD_RTOL = 1e-10


def symmetrize(A):
    return 0.5 * (A + A.T)


def is_psd(A, rtol=PSD_RTOL):
    """True when every eigenvalue is >= -rtol * ||A||_2."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return True
    w = np.linalg.eigvalsh(symmetrize(A))
    scale = max(abs(w[0]), abs(w[-1]))
    return bool(w[0] >= -rtol * scale)


@dataclass(frozen=True, eq=False)
class TransitionGramian:
    k: int
    l: int
    M: np.ndarray

    @property
    def matrix(self):
        return self.M


@dataclass(frozen=True, eq=False)
class ObservabilityGramian:
    k: int
    l: int
    O: np.ndarray

    @property
    def matrix(self):
        return self.O


@dataclass(frozen=True, eq=False)
class StackedMap:
    k: int
    l: int
    kind: str
    rows: np.ndarray


def _backward(sys, k, l, terminal, with_output):
    sys.check_window(k, l)
    X = terminal
    for j in range(l - 1, k - 1, -1):
        c = sys.coeff(j)
        X = c.F.T @ X @ c.F + c.G.T @ X @ c.G
        if with_output:
            X = X + c.H.T @ c.H
        X = symmetrize(X)
    return X


def transition_gramian(sys, k, l):
    """Quadratic form of the stacked transition map phi[l, k].

    Backward recursion M[l, l] = I, M[l, j] = F[j]' M[l, j+1] F[j] + G[j]' M[l, j+1] G[j].
    """
    M = _backward(sys, k, l, np.eye(sys.n), with_output=False)
    return TransitionGramian(int(k), int(l), M)


def observability_gramian(sys, k, l):
    """Observability Gramian O[l, k] = H[l, k]' H[l, k].

    Parameters
    ----------
    sys : SystemSchedule
    k, l : int
        Window, 0 <= k <= l.  For finite schedules l must lie inside the schedule.

    Returns
    -------
    ObservabilityGramian
        ``O`` satisfies x' O x = sum_{i=k}^{l} E|y_i|^2 for x[k] = x.
    """
    H = sys.coeff(l).H
    O = _backward(sys, k, l, H.T @ H, with_output=True)
    return ObservabilityGramian(int(k), int(l), O)


def _check_cap(k, l, stack_cap):
    if l - k > stack_cap:
        raise WindowTooLarge(f"window length {l - k} exceeds stack cap {stack_cap}")


def _phi(sys, k, l):
    # phi[l, j] = [phi[l, j+1] F_j ; phi[l, j+1] G_j]
    phi = np.eye(sys.n)
    for j in range(l - 1, k - 1, -1):
        c = sys.coeff(j)
        phi = np.vstack([phi @ c.F, phi @ c.G])
    return phi


def stacked_transition(sys, k, l, stack_cap=STACK_CAP):
    """Explicit stacked map phi[l, k] with 2^(l-k) n rows."""
    _check_cap(k, l, stack_cap)
    sys.check_window(k, l)
    return StackedMap(int(k), int(l), "transition", _phi(sys, k, l))


def stacked_output_map(sys, k, l, stack_cap=STACK_CAP):
    """Explicit stacked output map H[l, k].

    Block j (j = k..l) is (I_{2^(j-k)} kron H_j) phi[j, k]; the Kronecker
    factor is applied blockwise rather than formed.
    """
    _check_cap(k, l, stack_cap)
    sys.check_window(k, l)
    n = sys.n
    blocks = []
    for j in range(k, l + 1):
        phi = _phi(sys, k, j)
        H = sys.coeff(j).H
        nblk = phi.shape[0] // n
        blocks.append((H @ phi.reshape(nblk, n, n)).reshape(nblk * H.shape[0], n))
    return StackedMap(int(k), int(l), "output", np.vstack(blocks))


def gramian_crosscheck(sys, k, l, stack_cap=STACK_CAP):
    """Largest elementwise gap between the recursive Gramians and the stacked-map Gramians."""
    _check_cap(k, l, stack_cap)
    H = stacked_output_map(sys, k, l, stack_cap).rows
    phi = stacked_transition(sys, k, l, stack_cap).rows
    O = observability_gramian(sys, k, l).O
    M = transition_gramian(sys, k, l).M
    return max(float(np.max(np.abs(H.T @ H - O))), float(np.max(np.abs(phi.T @ phi - M))))
