"""Generalized Lyapunov equations and Lyapunov-type stability theorems.

The GLE couples consecutive times,

    -P[k] + F[k]' P[k+1] F[k] + G[k]' P[k+1] G[k] + H[k]' H[k] = 0,

and its finite-horizon version with P[T, T] = 0 produces exactly the
observability Gramians: P[k, T] = O[T-1, k].  The theorem checker evaluates
every hypothesis of a named Lyapunov-type result with the detectability and
stability modules and emits the conclusion only when all of them pass.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .detectability import (YES, DetectabilityWindow, exact_detectability_kN,
                            exact_observability_kN, search_uniform_detectability,
                            uniform_detectability_check)
from .errors import (InputError, ModeMismatch, MonotonicityViolated, NoConvergence, NotPeriodic,
                     SingularPeriodMap)
from .gramians import is_psd, symmetrize
from .stability import esms_empirical, esms_monodromy, esms_spectral, moment_operator
from .system import CONSTANT

__all__ = [
    "GleSolution", "GloSpectrum", "Hypothesis", "LyapunovVerdict", "THEOREMS",
    "ESMS", "SOLUTION_EXISTS_PSD", "NOT_APPLICABLE",
    "gle_residual", "gle_backward", "gle_limit", "gle_periodic_fixed_point",
    "glo_spectrum", "verify_lyapunov_theorem",
]

ESMS = "ESMS"
SOLUTION_EXISTS_PSD = "SolutionExistsPSD"
NOT_APPLICABLE = "NotApplicable"
THEOREMS = ("T4.1.1", "T4.1.2", "C4.1.3", "T5.3.1", "T5.3.2", "T4.2.1", "T5.1.2")

GLE_TOL = 1e-13
GLE_TMAX = 20000
FIXED_POINT_COND = 1e12
KR_ITERATIONS = 10_000
KR_TOL = 1e-8
ANGLE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GleSolution:
    """P[k] for k = k0, k0+1, ... together with per-step GLE residuals.

    ``P`` has one more entry than ``residuals`` for finite-horizon solutions
    (the terminal P[T, T] = 0 has no residual of its own).
    """

    k0: int
    P: tuple
    residuals: tuple
    kind: str
    T: Optional[int] = None
    gap: Optional[float] = None
    uniqueness_gap: Optional[float] = None
    period: Optional[int] = None

    def at(self, k):
        i = k - self.k0
        if self.period is not None:
            i %= self.period
        return self.P[i]

    @property
    def max_residual(self):
        return max(self.residuals, default=0.0)


def _gle_step(c, P_next):
    return symmetrize(c.F.T @ P_next @ c.F + c.G.T @ P_next @ c.G + c.H.T @ c.H)


def gle_residual(sys, k, P_k, P_next):
    """Spectral norm of -P[k] + F' P[k+1] F + G' P[k+1] G + H' H."""
    return float(np.linalg.norm(_gle_step(sys.coeff(k), P_next) - P_k, 2))


def gle_backward(sys, k0, T):
    """Finite-horizon GLE: P[T, T] = 0 recursed back to P[k0, T].

    ``P`` holds P[k0, T], ..., P[T, T]; x' P[k0, T] x is the output energy
    sum_{k=k0}^{T-1} E|y_k|^2 from x[k0] = x.
    """
    if T < k0:
        raise InputError("T must be >= k0")
    if T > k0:
        sys.check_window(k0, T - 1)
    Ps = [np.zeros((sys.n, sys.n))]
    for k in range(T - 1, k0 - 1, -1):
        Ps.append(_gle_step(sys.coeff(k), Ps[-1]))
    Ps.reverse()
    res = tuple(gle_residual(sys, k, Ps[k - k0], Ps[k - k0 + 1]) for k in range(k0, T))
    return GleSolution(int(k0), tuple(Ps), res, "backward", T=int(T))


def _tail_phases(sys):
    """(first index of the repeating part, its period) for constant and periodic tails."""
    if sys.period is not None:
        return 0, sys.period
    if sys.tail.kind == CONSTANT:
        return sys.length - 1, 1
    raise NotPeriodic("the limit GLE needs a constant or periodic tail")


def _sweep(sys, start, tau, Ps):
    # one backward period over times start .. start + tau - 1, ending at P[start]
    out = [None] * tau
    nxt = Ps[0]
    for j in range(tau - 1, -1, -1):
        nxt = _gle_step(sys.coeff(start + j), nxt)
        out[j] = nxt
    return out


def _iterate_limit(sys, start, tau, P_init, tol, T_max, monotone):
    Ps = [P_init.copy() for _ in range(tau)]
    gap = np.inf
    steps = 0
    while steps < T_max:
        new = _sweep(sys, start, tau, Ps)
        steps += tau
        scale = 1.0 + max(np.linalg.norm(P, 2) for P in new)
        gap = max(float(np.linalg.norm(a - b, 2)) for a, b in zip(new, Ps))
        if monotone:
            for a, b in zip(new, Ps):
                lo = np.linalg.eigvalsh(symmetrize(a - b))[0]
                if lo < -1e-9 * scale:
                    raise MonotonicityViolated(f"P decreased by {-lo:.3g} after {steps} steps")
        Ps = new
        if not np.isfinite(scale) or scale > 1e150:
            break
        if gap < tol * scale:
            return Ps, steps, gap
    raise NoConvergence(T_max, gap)


def gle_limit(sys, k_range=None, tol=GLE_TOL, T_max=GLE_TMAX, check_uniqueness=True):
    """Limit of P[k, T] as T grows, for schedules with a constant or periodic tail.

    The finite-horizon solutions increase monotonically in T; iteration stops
    once a full period changes P by less than ``tol * (1 + |P|)``.  A decrease
    raises :class:`MonotonicityViolated`; no convergence within ``T_max``
    steps raises :class:`NoConvergence`, which usually means the system is
    not ESMS.  With ``check_uniqueness`` the iteration is restarted from
    P = I and the distance between the two limits is reported.
    """
    if not tol > 0:
        raise InputError("tol must be > 0")
    start, tau = _tail_phases(sys)
    n = sys.n
    Ps, steps, gap = _iterate_limit(sys, start, tau, np.zeros((n, n)), tol, T_max, True)
    ugap = None
    if check_uniqueness:
        alt, _, _ = _iterate_limit(sys, start, tau, np.eye(n), tol, T_max, False)
        ugap = max(float(np.linalg.norm(a - b, 2)) for a, b in zip(alt, Ps))
    if k_range is None:
        k_range = range(0, start + tau)
    ks = sorted(int(k) for k in k_range)
    k0, k1 = ks[0], ks[-1]

    def tail_at(k):
        return Ps[(k - start) % tau]

    # times before the repeating part come from a backward recursion off its start
    P_of = {}
    if k0 < start:
        nxt = tail_at(start)
        for k in range(start - 1, k0 - 1, -1):
            nxt = _gle_step(sys.coeff(k), nxt)
            P_of[k] = nxt
    seq = [P_of[k] if k < start else tail_at(k) for k in range(k0, k1 + 1)]
    res = [gle_residual(sys, k, seq[k - k0], P_of.get(k + 1) if k + 1 < start else tail_at(k + 1))
           for k in range(k0, k1 + 1)]
    return GleSolution(k0, tuple(seq), tuple(res), "limit", T=steps, gap=gap, uniqueness_gap=ugap)


def gle_periodic_fixed_point(sys, refine=True):
    """Solve the tau-periodic GLE P[k] = P[k + tau] as one linear system.

    P[0] = A' vec-wise composition over a period plus a constant, so
    (I - Phi') vec(P[0]) = c where Phi is the forward period map.  The other
    phases follow by one backward sweep.
    """
    tau = sys.period
    if tau is None:
        raise NotPeriodic("the periodic GLE needs a periodic schedule")
    n = sys.n
    # affine map P[tau] -> P[0]: P[0] = B vec(P[tau]) + c
    B = np.eye(n * n)
    c = np.zeros(n * n)
    for j in range(tau - 1, -1, -1):
        cf = sys.coeff(j)
        step = moment_operator(cf.F.T, cf.G.T)
        B = step @ B
        c = step @ c + (cf.H.T @ cf.H).reshape(-1)
    A = np.eye(n * n) - B
    if np.linalg.cond(A) > FIXED_POINT_COND:
        raise SingularPeriodMap("period map has an eigenvalue at 1; the periodic GLE is singular")
    p = np.linalg.solve(A, c)
    if refine:
        p = p + np.linalg.solve(A, c - A @ p)
    P0 = symmetrize(p.reshape(n, n))
    Ps = _sweep(sys, 0, tau, [P0])
    Ps[0] = P0
    res = tuple(gle_residual(sys, k, Ps[k], Ps[(k + 1) % tau]) for k in range(tau))
    return GleSolution(0, tuple(Ps), res, "periodic", period=tau)


# -- generalized Lyapunov operator -------------------------------------------------

@dataclass(frozen=True, eq=False)
class GloSpectrum:
    eigenvalues: np.ndarray
    beta: float
    X: Optional[np.ndarray]
    witness_found: bool
    witness_residual: Optional[float] = None


def _kr_candidate(L, beta, v, n):
    X = symmetrize(np.real(v).reshape(n, n))
    nrm = np.linalg.norm(X)
    if nrm == 0:
        return None
    X = X / nrm
    if np.trace(X) < 0:
        X = -X
    if not is_psd(X, 1e-8):
        return None
    r = float(np.linalg.norm((L @ X.reshape(-1)).reshape(n, n) - beta * X))
    return X, r


def glo_spectrum(F, G):
    """Spectrum of L(Z) = F Z F' + G Z G' and a PSD eigenvector at its spectral radius.

    Krein-Rutman guarantees a nonzero PSD X with L(X) = beta X.  It is looked
    for in the numerical eigenspace of beta first, then by power iteration
    from the identity with projection onto the PSD cone.
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1] or G.shape != F.shape:
        raise InputError("F and G must be square matrices of equal size")
    n = F.shape[0]
    L = moment_operator(F, G)
    ev, V = np.linalg.eig(L)
    beta = float(np.max(np.abs(ev)))
    tol = KR_TOL * max(1.0, beta)
    if beta == 0:
        return GloSpectrum(ev, 0.0, np.eye(n) / np.sqrt(n), True, 0.0)

    cands = [V[:, i] for i in np.flatnonzero(np.abs(ev - beta) <= 1e-6 * max(1.0, beta))]
    _, s, Vt = np.linalg.svd(L - beta * np.eye(n * n))
    null = Vt[s <= 1e-7 * max(1.0, s[0])].T
    if null.shape[1]:
        eye = np.eye(n).reshape(-1)
        cands.append(null @ (null.T @ eye))
        cands.extend(null.T)
    best = None
    for v in cands:
        got = _kr_candidate(L, beta, v, n)
        if got is not None and (best is None or got[1] < best[1]):
            best = got
    if best is not None and best[1] <= tol:
        return GloSpectrum(ev, beta, best[0], True, best[1])

    X = np.eye(n) / np.sqrt(n)
    r = np.inf
    for _ in range(KR_ITERATIONS):
        Y = symmetrize((L @ X.reshape(-1)).reshape(n, n))
        w, U = np.linalg.eigh(Y)
        Y = (U * np.clip(w, 0, None)) @ U.T
        nrm = np.linalg.norm(Y)
        if nrm == 0:
            break
        X = Y / nrm
        r = float(np.linalg.norm((L @ X.reshape(-1)).reshape(n, n) - beta * X))
        if r <= tol:
            return GloSpectrum(ev, beta, X, True, r)
    return GloSpectrum(ev, beta, None, False, r if np.isfinite(r) else None)


# -- Lyapunov-type theorems ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Hypothesis:
    name: str
    passed: bool
    witness: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class LyapunovVerdict:
    tag: str
    hypotheses: tuple
    conclusion: str
    range_limited: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.conclusion != NOT_APPLICABLE and not all(h.passed for h in self.hypotheses):
            raise ValueError("a conclusion needs every hypothesis to pass")

    @property
    def failed(self):
        return [h for h in self.hypotheses if not h.passed]


def _candidate_P(sys, inputs):
    """The P sequence to test: supplied, or solved from the system."""
    if inputs.get("P") is not None:
        P = inputs["P"]
        if isinstance(P, np.ndarray) and P.ndim == 2:
            P = [P]
        return [symmetrize(np.asarray(p, dtype=float)) for p in P], "supplied"
    if sys.period is not None:
        try:
            return list(gle_periodic_fixed_point(sys).P), "periodic-fixed-point"
        except SingularPeriodMap:
            return None, "singular period map"
    sol = gle_limit(sys, k_range=range(sys.length), check_uniqueness=False)
    return list(sol.P), "limit"


def _P_index(sys, P, k):
    if sys.period is not None:
        return P[k % sys.period] if len(P) == sys.period else P[k % len(P)]
    return P[min(k, len(P) - 1)]


def _gle_hypothesis(sys, inputs, ks, need, tol):
    """P solves the GLE on ``ks`` and is PSD ("psd") or positive definite ("pd")."""
    name = "P positive definite solves GLE" if need == "pd" else "P PSD solves GLE"
    try:
        P, source = _candidate_P(sys, inputs)
    except (NoConvergence, NotPeriodic) as exc:
        return Hypothesis(name, False, {"reason": "no bounded solution found", "detail": str(exc)}), None
    if P is None:
        return Hypothesis(name, False, {"reason": source}), None
    if sys.period is not None and len(P) != sys.period and len(P) != 1:
        raise InputError(f"P must have {sys.period} entries (one per phase)")
    worst = 0.0
    for k in ks:
        Pk, Pn = _P_index(sys, P, k), _P_index(sys, P, k + 1)
        scale = 1.0 + np.linalg.norm(Pk, 2)
        r = gle_residual(sys, k, Pk, Pn)
        worst = max(worst, r / scale)
        if r > tol * scale:
            return Hypothesis(name, False, {"reason": "GLE residual too large", "k": k, "residual": r,
                                            "source": source}), None
        w, U = np.linalg.eigh(Pk)
        floor = 1e-10 * max(1.0, abs(w[-1]))
        if (need == "pd" and w[0] <= floor) or (need == "psd" and w[0] < -floor):
            return Hypothesis(name, False, {"reason": "not positive definite" if need == "pd" else "not PSD",
                                            "k": k, "lambda_min": float(w[0]), "vector": U[:, 0],
                                            "source": source}), None
    bound = max(float(np.linalg.norm(p, 2)) for p in P)
    return Hypothesis(name, True, {"source": source, "max_relative_residual": worst, "bound": bound}), P


def _bounded_hypothesis(sys, names):
    b = sys.bounds()
    info = {f"max_norm_{k}": b[k] for k in names}
    info["range_limited"] = sys.horizon is not None
    return Hypothesis(f"{', '.join(names)} uniformly bounded", all(np.isfinite(b[k]) for k in names), info)


def _esms_hypothesis(sys):
    if sys.is_time_invariant:
        cert = esms_spectral(sys)
    elif sys.period is not None:
        cert = esms_monodromy(sys)
    else:
        cert = esms_empirical(sys)
    return Hypothesis("system ESMS", cert.is_esms, cert.to_dict())


def _need_periodic(sys, tag):
    if sys.period is None:
        raise ModeMismatch(f"{tag} needs a periodic schedule")


def _kernel_basis(P):
    w, V = np.linalg.eigh(P)
    return V[:, w <= 1e-10 * max(1.0, abs(w[-1]))]


def _principal_gap(A, B):
    if A.shape[1] != B.shape[1]:
        return np.inf
    if A.shape[1] == 0:
        return 0.0
    s = np.linalg.svd(A.T @ B, compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1, 1)))


def verify_lyapunov_theorem(tag, sys, inputs=None):
    """Check the hypotheses of a Lyapunov-type theorem and report its conclusion.

    Parameters
    ----------
    tag : str
        One of ``THEOREMS``.
    sys : SystemSchedule
    inputs : dict, optional
        ``window`` (DetectabilityWindow) for the uniform-detectability
        theorem, ``N`` for the exact-detectability/observability ones, ``P``
        (one matrix per phase, or per described step) to test a given
        solution instead of solving for one, ``eps`` for the output-energy
        bound, ``k_range`` and ``tol`` (relative GLE residual, default 1e-8).

    Returns
    -------
    LyapunovVerdict
        The conclusion is ``NotApplicable`` unless every hypothesis passed.
    """
    inputs = dict(inputs or {})
    if tag not in THEOREMS:
        raise InputError(f"unknown theorem tag {tag!r}; expected one of {THEOREMS}")
    tol = float(inputs.get("tol", 1e-8))
    n = sys.n
    if "k_range" in inputs:
        ks = [int(k) for k in inputs["k_range"]]
    elif sys.period is not None:
        ks = list(range(sys.period))
    else:
        ks = list(range(sys.length if sys.horizon is None else sys.horizon - 1))
    range_limited = sys.horizon is not None
    hyps, details = [], {}
    conclusion = ESMS

    if tag == "T4.1.1":
        hyps.append(_esms_hypothesis(sys))
        hyps.append(_bounded_hypothesis(sys, ["H"]))
        conclusion = SOLUTION_EXISTS_PSD
        if all(h.passed for h in hyps) and sys.horizon is None:
            sol = gle_limit(sys, k_range=ks)
            details.update(P=list(sol.P), max_residual=sol.max_residual,
                           uniqueness_gap=sol.uniqueness_gap)
    elif tag == "T4.1.2":
        w = inputs.get("window")
        if w is not None:
            if not isinstance(w, DetectabilityWindow):
                w = DetectabilityWindow(**w)
            v = uniform_detectability_check(sys, w, ks)
        else:
            v = search_uniform_detectability(sys, ks)
        hyps.append(Hypothesis("uniformly detectable", v.holds == YES,
                               {"params": v.params, "failures": [f.k for f in v.failures]}))
        hyps.append(_bounded_hypothesis(sys, ["F", "G"]))
        hyps.append(_gle_hypothesis(sys, inputs, ks, "psd", tol)[0])
        range_limited = True
    elif tag == "C4.1.3":
        lam = [float(np.linalg.eigvalsh(sys.coeff(k).H.T @ sys.coeff(k).H)[0]) for k in ks]
        kmin = ks[int(np.argmin(lam))]
        eps = inputs.get("eps")
        eps = 0.5 * min(lam) if eps is None else float(eps)
        ok = eps > 0 and min(lam) > eps
        hyps.append(Hypothesis("H'H > eps I", ok, {"eps": eps, "min_lambda": min(lam), "k": kmin}))
        hyps.append(_gle_hypothesis(sys, inputs, ks, "psd", tol)[0])
        range_limited = sys.period is None
    elif tag in ("T5.3.1", "T5.3.2", "T4.2.1"):
        _need_periodic(sys, tag)
        N = int(inputs.get("N", n * (n + 1) // 2 - 1))
        phases = list(range(sys.period))
        if tag == "T4.2.1":
            v = exact_observability_kN(sys, N, phases)
            hyps.append(Hypothesis(f"K^{N}-exactly observable", v.holds == YES,
                                   {"failures": [f.k for f in v.failures]}))
        else:
            v = exact_detectability_kN(sys, N, phases, mode="periodic")
            hyps.append(Hypothesis(f"K^{N}-exactly detectable", v.holds == YES,
                                   {"holds": v.holds, "failures": [f.k for f in v.failures]}))
        h, P = _gle_hypothesis(sys, inputs, phases, "pd" if tag == "T5.3.1" else "psd", tol)
        hyps.append(h)
        if tag == "T5.3.2":
            if P is None:
                hyps.append(Hypothesis("Ker P equal across phases", False, {"reason": "no P"}))
            else:
                kers = [_kernel_basis(_P_index(sys, P, k)) for k in phases]
                gaps = [_principal_gap(kers[0], K) for K in kers[1:]]
                worst = max(gaps, default=0.0)
                hyps.append(Hypothesis("Ker P equal across phases", worst <= ANGLE_TOL,
                                       {"dims": [K.shape[1] for K in kers], "max_angle": worst}))
        range_limited = False
    elif tag == "T5.1.2":
        if not sys.is_time_invariant:
            raise ModeMismatch("T5.1.2 needs a time-invariant system")
        c = sys.entries[0]
        glo = glo_spectrum(c.F, c.G)
        details["beta"] = glo.beta
        hyps.append(Hypothesis("spectrum of L in closed unit disk", glo.beta <= 1 + 1e-9, {"beta": glo.beta}))
        N = int(inputs.get("N", n * (n + 1) // 2 - 1))
        v = exact_detectability_kN(sys, N, [0], mode="time-invariant")
        hyps.append(Hypothesis("exactly detectable", v.holds == YES, {"N": N, "holds": v.holds}))
        P = inputs.get("P")
        if P is None:
            A = np.eye(n * n) - moment_operator(c.F.T, c.G.T)
            q = (c.H.T @ c.H).reshape(-1)
            U, sv, Vt = np.linalg.svd(A)
            keep = sv > 1e-12 * max(1.0, sv[0])
            p = Vt[keep].T @ ((U[:, keep].T @ q) / sv[keep])
            P = symmetrize(p.reshape(n, n))
        P = symmetrize(np.asarray(P, dtype=float).reshape(n, n))
        r = gle_residual(sys, 0, P, P)
        # measured against the data: near a singular operator a huge P can
        # have a residual that is small relative to itself but not to H'H
        ok = r <= tol * (1 + np.linalg.norm(c.H.T @ c.H, 2))
        hyps.append(Hypothesis("real symmetric GLE solution", ok,
                               {"residual": r} if ok else {"reason": "no symmetric solution", "residual": r}))
        if ok:
            details["P"] = P
            details["P_psd"] = is_psd(P, 1e-8)
    if not all(h.passed for h in hyps):
        conclusion = NOT_APPLICABLE
    return LyapunovVerdict(tag, tuple(hyps), conclusion, range_limited, details)
