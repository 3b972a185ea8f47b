"""Uniform detectability/observability and the exact detectability taxonomy.

Window-based notions reduce to quadratic forms in the Gramians of
:mod:`stocheck.gramians`:

* uniform detectability with window (s, t, d, b) asks, at every k, whether
  x' (M[k+t,k] - d^2 I) x >= 0 forces x' (O[k+s,k] - b^2 I) x >= 0.  That
  two-form implication is decided exactly with the homogeneous S-lemma.
* k^N-unobservable states at time k form ker O[k+N, k]; exact detectability
  asks whether trajectories launched from that kernel decay in mean square.

Verdicts are "Yes", "No" or "Undecided".  A "No" always carries a witness.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InputError, ModeMismatch
from .gramians import observability_gramian, symmetrize, transition_gramian
from .stability import (EMPIRICAL_MARGIN, EMPIRICAL_MAX_RESIDUAL, SPECTRAL_TOL, _fit_rate,
                        moment_operator, period_map)
from .system import closed_loop

__all__ = [
    "YES", "NO", "UNDECIDED",
    "DetectabilityWindow", "Witness", "DetectabilityVerdict", "UnobservableSubspace",
    "SProcedureResult", "s_procedure", "uniform_detectability_check",
    "search_uniform_detectability", "uniform_observability_check", "unobservable_subspace",
    "exact_observability_kN", "kernel_decay_test", "exact_detectability_kN",
    "exact_detectability_kinf", "WindowProbe", "kwft_probe",
    "FeedbackInvarianceReport", "detectability_feedback_invariance_test",
]

YES, NO, UNDECIDED = "Yes", "No", "Undecided"

KERNEL_RTOL = 1e-10
S_PROCEDURE_TOL = 1e-9
DECAY_HORIZON = 50


@dataclass(frozen=True)
class DetectabilityWindow:
    s: int
    t: int
    d: float
    b: float

    def __post_init__(self):
        if self.s < 0 or self.t < 0:
            raise InputError("window lengths s and t must be >= 0")
        if not 0 <= self.d < 1:
            raise InputError("decay threshold d must lie in [0, 1)")
        if not self.b > 0:
            raise InputError("output threshold b must be > 0")


@dataclass(frozen=True, eq=False)
class Witness:
    k: int
    kind: str
    vector: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class DetectabilityVerdict:
    notion: str
    params: dict
    holds: str
    witnesses: list
    k_range: tuple
    range_limited: bool = True

    def __post_init__(self):
        if self.holds == NO and not any(w.kind in _FAILURE_KINDS for w in self.witnesses):
            raise ValueError("a No verdict needs a witness")

    @property
    def failures(self):
        return [w for w in self.witnesses if w.kind in _FAILURE_KINDS]


_FAILURE_KINDS = {"counterexample", "eigenvector", "kernel", "non-decaying-kernel"}


def _krange(k_range):
    ks = [int(k) for k in k_range]
    if not ks:
        raise InputError("k_range is empty")
    if min(ks) < 0:
        raise InputError("k_range must be non-negative")
    return ks


def _range_summary(ks):
    return (min(ks), max(ks), len(ks))


def _aggregate(states):
    if NO in states:
        return NO
    if UNDECIDED in states:
        return UNDECIDED
    return YES


# -- S-procedure ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SProcedureResult:
    holds: bool
    vacuous: bool = False
    tau: Optional[float] = None
    margin: Optional[float] = None
    witness: Optional[np.ndarray] = None


def _min_eig(A):
    w, V = np.linalg.eigh(A)
    return w[0], V[:, 0]


def _find_witness(A, B, candidates):
    best, best_val = None, 0.0
    cands = [c / np.linalg.norm(c) for c in candidates if np.linalg.norm(c) > 0]
    thetas = np.linspace(0.0, np.pi, 721)
    for i, a in enumerate(cands):
        for b in cands[i:]:
            X = np.outer(np.cos(thetas), a) + np.outer(np.sin(thetas), b)
            X /= np.linalg.norm(X, axis=1, keepdims=True).clip(1e-300)
            qa = np.einsum("ij,jk,ik->i", X, A, X)
            qb = np.einsum("ij,jk,ik->i", X, B, X)
            ok = (qa >= 0) & (qb < best_val)
            if ok.any():
                j = np.argmin(np.where(ok, qb, np.inf))
                best, best_val = X[j], qb[j]
    return best


def s_procedure(A, B, tol=S_PROCEDURE_TOL):
    """Decide whether x'Ax >= 0 implies x'Bx >= 0 for every x.

    With a Slater point (some x'Ax > 0) the implication holds iff
    B - tau A is positive semidefinite for some tau >= 0; lambda_min(B - tau A)
    is concave in tau, so a bounded scalar search decides it.  Without a Slater
    point the premise set is ker A (or {0}, which makes the implication
    vacuous).  On failure a witness x with x'Ax >= 0 > x'Bx is returned.
    """
    A = symmetrize(np.asarray(A, dtype=float))
    B = symmetrize(np.asarray(B, dtype=float))
    band = tol * max(1.0, np.linalg.norm(A, 2), np.linalg.norm(B, 2))
    wa, Va = np.linalg.eigh(A)
    if wa[-1] < -band:
        return SProcedureResult(True, vacuous=True)
    wb0, vb0 = _min_eig(B)
    if wb0 >= -band:
        return SProcedureResult(True, tau=0.0, margin=float(wb0))
    if wa[-1] <= band:
        Z = Va[:, wa >= -band]
        w, V = np.linalg.eigh(Z.T @ B @ Z)
        if w[0] >= -band:
            return SProcedureResult(True, margin=float(w[0]))
        return SProcedureResult(False, margin=float(w[0]), witness=Z @ V[:, 0])
    if wa[0] >= -band:
        return SProcedureResult(False, tau=0.0, margin=float(wb0), witness=vb0)
    v = Va[:, -1]
    tau_max = float(v @ B @ v) / wa[-1]
    if tau_max < 0:
        return SProcedureResult(False, margin=float(v @ B @ v), witness=v)

    def f(t):
        return np.linalg.eigvalsh(B - t * A)[0]

    res = minimize_scalar(lambda t: -f(t), bounds=(0.0, tau_max), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, tau_max)})
    cands = [(float(res.x), -float(res.fun)), (0.0, f(0.0)), (tau_max, f(tau_max))]
    tau, margin = max(cands, key=lambda c: c[1])
    if margin >= -band:
        return SProcedureResult(True, tau=tau, margin=float(margin))
    eps = 1e-6 * max(1.0, tau_max)
    vecs = [_min_eig(B - t * A)[1] for t in (tau, max(tau - eps, 0.0), min(tau + eps, tau_max))]
    x = _find_witness(A, B, vecs + [v, vb0])
    if x is None:
        x = vecs[0]
    return SProcedureResult(False, tau=tau, margin=float(margin), witness=x)


# -- uniform notions --------------------------------------------------------------

class _GramianCache:
    def __init__(self, sys):
        self.sys = sys
        self._m = {}
        self._o = {}

    def M(self, k, l):
        if (k, l) not in self._m:
            self._m[k, l] = transition_gramian(self.sys, k, l).M
        return self._m[k, l]

    def O(self, k, l):
        if (k, l) not in self._o:
            self._o[k, l] = observability_gramian(self.sys, k, l).O
        return self._o[k, l]


def _ud_scan(cache, w, ks, exhaustive):
    n = cache.sys.n
    I = np.eye(n)
    witnesses, failed = [], False
    for k in ks:
        A = cache.M(k, k + w.t) - w.d ** 2 * I
        B = cache.O(k, k + w.s) - w.b ** 2 * I
        r = s_procedure(A, B)
        if r.vacuous:
            witnesses.append(Witness(k, "vacuous", info={"reason": "premise only holds at x = 0"}))
        elif not r.holds:
            failed = True
            x = r.witness / np.linalg.norm(r.witness)
            witnesses.append(Witness(k, "counterexample", x, {
                "state_energy_ratio": float(x @ cache.M(k, k + w.t) @ x),
                "output_energy_ratio": float(x @ cache.O(k, k + w.s) @ x)}))
            if not exhaustive:
                break
    return failed, witnesses


def uniform_detectability_check(sys, w, k_range, exhaustive=False):
    """Check the uniform-detectability implication for one window at every k in ``k_range``.

    Parameters
    ----------
    sys : SystemSchedule
    w : DetectabilityWindow
    k_range : iterable of int
    exhaustive : bool
        Keep scanning after the first counterexample.

    Returns
    -------
    DetectabilityVerdict
        ``Yes`` if the implication holds at every k examined; vacuous
        acceptances (premise satisfied only by x = 0) are tagged as witnesses
        of kind ``"vacuous"``.
    """
    ks = _krange(k_range)
    failed, witnesses = _ud_scan(_GramianCache(sys), w, ks, exhaustive)
    params = {"s": w.s, "t": w.t, "d": w.d, "b": w.b}
    return DetectabilityVerdict("UniformDetectable", params, NO if failed else YES, witnesses,
                                _range_summary(ks), range_limited=True)


def search_uniform_detectability(sys, k_range, s_max=4, t_max=None, d_max=0.99,
                                 b_grid=tuple(np.logspace(0, -2, 9))):
    """Finite grid search for a window that makes the system uniformly detectable.

    The implication only gets easier with larger s, larger d and smaller b, so
    each decay length t is tried once at (s_max, d_max, min b); the largest
    grid value of b that still works is then reported.  ``No`` means no window
    in the grid works on ``k_range``.
    """
    ks = _krange(k_range)
    scan = sorted(ks, reverse=True)  # failures tend to sit at the far end
    t_max = s_max if t_max is None else t_max
    b_grid = sorted(b_grid, reverse=True)
    cache = _GramianCache(sys)
    witnesses = []
    for t in range(t_max + 1):
        w = DetectabilityWindow(s_max, t, d_max, b_grid[-1])
        failed, wit = _ud_scan(cache, w, scan, exhaustive=False)
        if failed:
            for x in wit:
                if x.kind == "counterexample":
                    x.info.update({"t": t, "s": s_max, "d": d_max, "b": b_grid[-1]})
                    witnesses.append(x)
            continue
        for b in b_grid:
            w = DetectabilityWindow(s_max, t, d_max, b)
            failed, wit = _ud_scan(cache, w, scan, exhaustive=False)
            if not failed:
                params = {"s": w.s, "t": w.t, "d": w.d, "b": w.b, "grid": True}
                return DetectabilityVerdict("UniformDetectable", params, YES, wit,
                                            _range_summary(ks), range_limited=True)
    params = {"s_max": s_max, "t_max": t_max, "d_max": d_max, "b_min": b_grid[-1], "grid": True}
    return DetectabilityVerdict("UniformDetectable", params, NO, witnesses, _range_summary(ks))


def uniform_observability_check(sys, s, b, k_range, exhaustive=False):
    """Yes iff lambda_min(O[k+s, k]) >= b^2 at every k in ``k_range``."""
    ks = _krange(k_range)
    witnesses = []
    for k in ks:
        O = observability_gramian(sys, k, k + s).O
        lam, vec = _min_eig(O)
        if lam < b ** 2:
            witnesses.append(Witness(k, "eigenvector", vec, {"lambda_min": float(lam)}))
            if not exhaustive:
                break
    holds = NO if witnesses else YES
    return DetectabilityVerdict("UniformObservable", {"s": s, "b": b}, holds, witnesses,
                                _range_summary(ks))


# -- unobservable subspaces and exact observability ------------------------------

@dataclass(frozen=True, eq=False)
class UnobservableSubspace:
    k: int
    N: int
    basis: np.ndarray
    horizon_cap: Optional[int] = None

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def is_trivial(self):
        return self.dim == 0


def _kernel(O, rtol=KERNEL_RTOL):
    w, V = np.linalg.eigh(symmetrize(O))
    top = max(abs(w[0]), abs(w[-1]))
    if not top > 0:
        return np.eye(O.shape[0])
    return V[:, w <= rtol * top]


def unobservable_subspace(sys, k, N, rtol=KERNEL_RTOL):
    """Orthonormal basis of ker O[k+N, k], the k^N-unobservable states at time k."""
    O = observability_gramian(sys, k, k + N).O
    return UnobservableSubspace(int(k), int(N), _kernel(O, rtol))


def _covers_all_phases(sys, ks):
    tau = sys.period
    return tau is not None and len({k % tau for k in ks}) == tau


def exact_observability_kN(sys, N, k_range, exhaustive=False):
    """Yes iff ker O[k+N, k] = {0} for every k in ``k_range``."""
    ks = _krange(k_range)
    witnesses = []
    for k in ks:
        sub = unobservable_subspace(sys, k, N)
        if not sub.is_trivial:
            witnesses.append(Witness(k, "kernel", sub.basis, {"dim": sub.dim}))
            if not exhaustive:
                break
    holds = NO if witnesses else YES
    return DetectabilityVerdict("ExactObservableKN", {"N": N}, holds, witnesses, _range_summary(ks),
                                range_limited=not _covers_all_phases(sys, ks))


# -- decay of trajectories from unobservable states --------------------------------

def _krylov_radius(A, z, rtol=1e-10):
    """Spectral radius of A restricted to the Krylov space of z."""
    scale = np.linalg.norm(A)
    nz = np.linalg.norm(z)
    if scale == 0 or nz == 0:
        return 0.0
    Q = [z / nz]
    for _ in range(len(z) - 1):
        w = A @ Q[-1]
        for _ in range(2):
            for q in Q:
                w = w - (q @ w) * q
        nw = np.linalg.norm(w)
        if nw <= rtol * scale:
            break
        Q.append(w / nw)
    Q = np.array(Q).T
    return float(np.max(np.abs(np.linalg.eigvals(Q.T @ A @ Q))))


def _resolve_mode(sys, mode):
    if mode == "auto":
        if sys.is_time_invariant:
            return "time-invariant"
        return "periodic" if sys.period is not None else "empirical"
    if mode == "periodic" and sys.period is None:
        raise ModeMismatch("periodic mode needs a periodic schedule")
    if mode == "time-invariant" and not sys.is_time_invariant:
        raise ModeMismatch("time-invariant mode needs a time-invariant schedule")
    if mode not in ("periodic", "time-invariant", "empirical"):
        raise InputError(f"unknown decay-test mode {mode!r}")
    return mode


def _decay_one(sys, k, X0, mode, horizon, tol):
    if mode in ("periodic", "time-invariant"):
        A = period_map(sys, k) if mode == "periodic" else moment_operator(sys.entries[0].F, sys.entries[0].G)
        rho = _krylov_radius(A, X0.reshape(-1))
        # a restricted mode at modulus >= 1 - tol rules out decay at any certifiable rate
        state = YES if rho < 1 - tol else NO
        return state, {"restricted_rho": rho, "marginal": bool(abs(rho - 1) <= tol)}
    h = horizon
    if sys.horizon is not None:
        h = min(h, sys.horizon - k)
    if h < 10:
        return UNDECIDED, {"reason": "fewer than 10 described steps after k", "horizon": h}
    X = X0
    tr = [np.trace(X)]
    for j in range(k, k + h):
        c = sys.coeff(j)
        X = c.F @ X @ c.F.T + c.G @ X @ c.G.T
        tr.append(np.trace(X))
    tr = np.array(tr)
    rate, res = _fit_rate(tr)
    info = {"fitted_rate": rate, "residual": res, "horizon": h}
    if rate < 1 - EMPIRICAL_MARGIN and res <= EMPIRICAL_MAX_RESIDUAL:
        return YES, info
    if rate >= 1 - tol:
        return NO, info
    return UNDECIDED, info


def kernel_decay_test(sys, k, basis, mode="auto", horizon=DECAY_HORIZON, tol=SPECTRAL_TOL):
    """Do trajectories started at time k anywhere in span(basis) decay in mean square?

    The projector P = basis basis' dominates every x x' with |x| = 1 in the
    span and the moment map is positive, so decay from X0 = P is equivalent
    to decay from every state in the span.  Periodic and time-invariant
    schedules are decided by the spectral radius of the period map restricted
    to the Krylov space of vec(P); other schedules by a fit over ``horizon``
    steps.

    Returns ``(state, info)``; on ``No``, ``info["vector"]`` names a single
    offending basis direction.
    """
    mode = _resolve_mode(sys, mode)
    basis = np.asarray(basis, dtype=float)
    if basis.shape[1] == 0:
        return YES, {"trivial": True}
    state, info = _decay_one(sys, k, basis @ basis.T, mode, horizon, tol)
    info["mode"] = mode
    if state == NO:
        info["vector"] = basis[:, 0]
        for j in range(basis.shape[1]):
            v = basis[:, j]
            if _decay_one(sys, k, np.outer(v, v), mode, horizon, tol)[0] == NO:
                info["vector"] = v
                break
    return state, info


def _kernel_verdict(sys, notion, params, ks, kernels, mode, horizon, exhaustive, range_limited):
    states, witnesses = [], []
    for k, basis in kernels:
        if basis.shape[1] == 0:
            continue
        state, info = kernel_decay_test(sys, k, basis, mode, horizon)
        states.append(state)
        if state == NO:
            vec = info.pop("vector")
            info["kernel_dim"] = basis.shape[1]
            witnesses.append(Witness(k, "non-decaying-kernel", vec, info))
            if not exhaustive:
                break
        else:
            info["kernel_dim"] = basis.shape[1]
            witnesses.append(Witness(k, "decaying-kernel" if state == YES else "undecided-kernel",
                                     basis, info))
    return DetectabilityVerdict(notion, params, _aggregate(states), witnesses, _range_summary(ks),
                                range_limited=range_limited)


def exact_detectability_kN(sys, N, k_range, mode="auto", horizon=DECAY_HORIZON, exhaustive=False):
    """K^N exact detectability on ``k_range``: every k^N-unobservable state must launch a
    mean-square decaying trajectory.

    ``mode`` is ``"periodic"``, ``"time-invariant"`` (exact spectral decay
    tests), ``"empirical"`` (fit over ``horizon`` steps) or ``"auto"``.
    """
    ks = _krange(k_range)
    mode = _resolve_mode(sys, mode)

    def kernels():
        for k in ks:
            yield k, unobservable_subspace(sys, k, N).basis

    return _kernel_verdict(sys, "ExactDetectableKN", {"N": N, "mode": mode}, ks, kernels(), mode,
                           horizon, exhaustive, range_limited=not _covers_all_phases(sys, ks))


def _stable_periodic_kernels(sys, cap, rtol=KERNEL_RTOL):
    """Kernels of O[k+N, k] per phase, iterated in N until they stop shrinking."""
    tau = sys.period
    cs = [sys.coeff(p) for p in range(tau)]
    O = [c.H.T @ c.H for c in cs]
    dims = [_kernel(X, rtol).shape[1] for X in O]
    for N in range(cap):
        O = [symmetrize(c.H.T @ c.H + c.F.T @ O[(p + 1) % tau] @ c.F + c.G.T @ O[(p + 1) % tau] @ c.G)
             for p, c in enumerate(cs)]
        new = [_kernel(X, rtol).shape[1] for X in O]
        # equal kernel dimensions at N and N+1 for every phase fix all later kernels
        if new == dims:
            return [_kernel(X, rtol) for X in O], N + 1
        dims = new
    return [_kernel(X, rtol) for X in O], None


def exact_detectability_kinf(sys, k_range, horizon_cap=200, mode="auto", horizon=DECAY_HORIZON,
                             exhaustive=False):
    """K^infinity exact detectability, with the unobservable space approximated at a cap.

    For periodic (and time-invariant) schedules the kernels of O[k+N, k] are
    iterated until they stabilize, which gives the infinite-horizon
    unobservable space exactly.  Otherwise ker O[k+cap, k], which contains it,
    is tested (the cap is clipped to the end of a finite schedule) and the
    verdict is range-limited.
    """
    ks = _krange(k_range)
    mode = _resolve_mode(sys, mode)
    params = {"horizon_cap": horizon_cap, "mode": mode}
    if sys.period is not None:
        per_phase, n_stable = _stable_periodic_kernels(sys, horizon_cap)
        params["stabilized_at"] = n_stable
        kernels = ((k, per_phase[k % sys.period]) for k in ks)
        exact = n_stable is not None and _covers_all_phases(sys, ks)
        return _kernel_verdict(sys, "ExactDetectableKInf", params, ks, kernels, mode, horizon,
                               exhaustive, range_limited=not exact)

    def kernels():
        for k in ks:
            N = horizon_cap
            if sys.horizon is not None:
                N = min(N, sys.horizon - 1 - k)
            yield k, unobservable_subspace(sys, k, N).basis

    return _kernel_verdict(sys, "ExactDetectableKInf", params, ks, kernels(), mode, horizon,
                           exhaustive, range_limited=True)


@dataclass(frozen=True, eq=False)
class WindowProbe:
    """Smallest window s_k per k after which no non-decaying unobservable state remains."""

    windows: dict
    cap: int
    wft_pattern: bool

    @property
    def bounded(self):
        return all(s is not None for s in self.windows.values())


def kwft_probe(sys, k_range, cap=200, mode="auto", horizon=DECAY_HORIZON):
    """Per-k minimal window s_k with no obstruction to k^(s_k)-exact detectability.

    An obstruction-free window stays obstruction-free when enlarged (the
    kernel only shrinks), so s_k is found by galloping plus bisection.  The
    result flags a growth trend in s_k; a lim-sup cannot be certified from
    finitely many k, so this is never a proof of weak finite-time detectability.
    """
    ks = _krange(k_range)
    mode = _resolve_mode(sys, mode)

    def ok(k, s):
        if sys.horizon is not None and k + s >= sys.horizon:
            return None
        basis = unobservable_subspace(sys, k, s).basis
        return kernel_decay_test(sys, k, basis, mode, horizon)[0] == YES

    windows = {}
    for k in ks:
        lo, s = -1, 0
        found = None
        while s <= cap:
            r = ok(k, s)
            if r is None:
                break
            if r:
                found = s
                break
            lo, s = s, max(1, 2 * s)
        if found is None and s > cap and lo < cap and ok(k, cap):
            found = cap
        if found is not None:
            hi = found
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if ok(k, mid):
                    hi = mid
                else:
                    lo = mid
            found = hi
        windows[k] = found
    vals = [windows[k] for k in sorted(windows)]
    third = max(1, len(vals) // 3)
    head = [v for v in vals[:third] if v is not None]
    tail = vals[-third:]
    grows = any(v is None for v in tail) or (bool(head) and max(v for v in tail) > max(head))
    records = 0
    best = -1
    for v in vals:
        v = cap + 1 if v is None else v
        if v > best:
            records += 1
            best = v
    return WindowProbe(windows, cap, bool(grows and records >= 3))


# -- output-feedback invariance --------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeedbackInvarianceReport:
    notion: str
    open_loop: DetectabilityVerdict
    closed_loop: DetectabilityVerdict

    @property
    def violation(self):
        return self.open_loop.holds == YES and self.closed_loop.holds == NO


def detectability_feedback_invariance_test(sys, fb, w=None, k_range=range(0, 20), notion="uniform",
                                           s_max=None, horizon_cap=200):
    """Compare a detectability verdict before and after closing an output-feedback loop.

    For uniform detectability the closed loop may need a different (d, b), so a
    failing closed-loop window is followed by a grid search before anything is
    reported as a violation.
    """
    closed = closed_loop(sys, fb)
    if notion == "uniform":
        if w is None:
            raise InputError("uniform notion needs a DetectabilityWindow")
        open_v = uniform_detectability_check(sys, w, k_range)
        closed_v = uniform_detectability_check(closed, w, k_range)
        if closed_v.holds != YES:
            closed_v = search_uniform_detectability(closed, k_range,
                                                    s_max=max(w.s, s_max or 0), t_max=max(w.s, w.t, s_max or 0),
                                                    b_grid=tuple(np.logspace(0, -4, 17)))
    elif notion == "kinf":
        open_v = exact_detectability_kinf(sys, k_range, horizon_cap)
        closed_v = exact_detectability_kinf(closed, k_range, horizon_cap)
    else:
        raise InputError(f"unknown notion {notion!r}")
    return FeedbackInvarianceReport(notion, open_v, closed_v)
