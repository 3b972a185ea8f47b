"""Second-moment propagation, mean-square stability certificates and a
Monte Carlo simulator that serves as an independent oracle.

The state second moment X[k] = E[x[k] x[k]'] obeys the deterministic
recursion X[k+1] = F X F' + G X G', whose n^2 x n^2 vectorized form is
kron(F, F) + kron(G, G).
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError, NotPeriodic, NotTimeInvariant
from .gramians import is_psd, symmetrize
from .system import NoiseModel

__all__ = [
    "MomentTrajectory", "EsmsCertificate", "Evidence", "SimulationEstimate",
    "moment_operator", "period_map", "propagate_second_moment",
    "esms_spectral", "esms_monodromy", "esms_empirical", "simulate",
    "write_simulation_csv", "thread_count",
]

ESMS, NOT_ESMS, INCONCLUSIVE = "ESMS", "NotESMS", "Inconclusive"

SPECTRAL_TOL = 1e-9
LAMBDA_PAD = 1e-6
BETA_POWERS = 200
EMPIRICAL_MARGIN = 0.01
EMPIRICAL_MAX_RESIDUAL = 0.5
DIVERGENCE_LEVEL = 1e12
BLOCK_PATHS = 8192


def moment_operator(F, G):
    """Matrix of Z -> F Z F' + G Z G' acting on row-major vec(Z)."""
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    return np.kron(F, F) + np.kron(G, G)


def period_map(sys, start=0):
    """Vectorized moment map over one period, starting at time ``start``."""
    tau = sys.period
    if tau is None:
        raise NotPeriodic("schedule is not periodic from k = 0")
    A = np.eye(sys.n * sys.n)
    for j in range(start, start + tau):
        c = sys.coeff(j)
        A = moment_operator(c.F, c.G) @ A
    return A


@dataclass(frozen=True, eq=False)
class MomentTrajectory:
    k0: int
    X: tuple

    @property
    def traces(self):
        return np.array([np.trace(X) for X in self.X])

    def at(self, k):
        return self.X[k - self.k0]


def propagate_second_moment(sys, X0, k0, T):
    """Exact second moments X[k0], ..., X[k0 + T] from a deterministic X[k0] = X0."""
    X = symmetrize(np.array(X0, dtype=float))
    if X.shape != (sys.n, sys.n):
        raise InputError(f"X0 must be {sys.n}x{sys.n}")
    if not is_psd(X):
        raise InputError("X0 must be positive semidefinite")
    if T > 0:
        sys.check_window(k0, k0 + T - 1)
    out = [X]
    for k in range(k0, k0 + T):
        c = sys.coeff(k)
        X = symmetrize(c.F @ X @ c.F.T + c.G @ X @ c.G.T)
        out.append(X)
    return MomentTrajectory(int(k0), tuple(out))


@dataclass(frozen=True)
class Evidence:
    kind: str
    rho: Optional[float] = None
    dimension: Optional[int] = None
    period: Optional[int] = None
    horizon: Optional[int] = None
    fitted_rate: Optional[float] = None
    residual: Optional[float] = None
    heuristic: bool = False


@dataclass(frozen=True)
class EsmsCertificate:
    """Verdict on E|x_k|^2 <= beta E|x_k0|^2 lam^(k - k0), with its evidence."""

    verdict: str
    beta: Optional[float]
    lam: Optional[float]
    evidence: Evidence = field(default_factory=lambda: Evidence("none"))

    def __post_init__(self):
        if self.verdict == ESMS and not (0 < self.lam < 1 and self.beta >= 1):
            raise ValueError("an ESMS certificate needs beta >= 1 and 0 < lam < 1")

    @property
    def is_esms(self):
        return self.verdict == ESMS

    def to_dict(self):
        return asdict(self)


def _verdict_from_rho(rho, tol):
    if rho < 1 - tol:
        return ESMS
    if rho > 1 + tol:
        return NOT_ESMS
    return INCONCLUSIVE


def _padded(rho):
    lam = rho + LAMBDA_PAD
    if lam >= 1:
        lam = 0.5 * (1 + rho)
    return lam


def _beta(sys, lam_step, phases, steps):
    # E|x_j|^2 <= |x|^2 trace(X_j) for X from I, since x x' <= |x|^2 I and the
    # moment map is positive
    log_beta = 0.0
    log_lam = math.log(lam_step)
    for s in range(phases):
        X = np.eye(sys.n)
        for j in range(1, steps + 1):
            c = sys.coeff(s + j - 1)
            X = c.F @ X @ c.F.T + c.G @ X @ c.G.T
            tr = float(np.trace(X))
            if tr <= 0:
                break
            log_beta = max(log_beta, math.log(tr) - j * log_lam)
    return math.exp(min(log_beta, 700.0))


def esms_spectral(sys, tol=SPECTRAL_TOL):
    """Decide ESMS of a time-invariant system from the spectral radius of kron(F,F) + kron(G,G)."""
    if not sys.is_time_invariant:
        raise NotTimeInvariant("esms_spectral needs a single entry with a constant or period-1 tail")
    c = sys.entries[0]
    A = moment_operator(c.F, c.G)
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    verdict = _verdict_from_rho(rho, tol)
    evidence = Evidence("spectral-radius", rho=rho, dimension=A.shape[0])
    if verdict != ESMS:
        return EsmsCertificate(verdict, None, None, evidence)
    lam = _padded(rho)
    return EsmsCertificate(verdict, _beta(sys, lam, 1, BETA_POWERS), lam, evidence)


def esms_monodromy(sys, tol=SPECTRAL_TOL):
    """Decide ESMS of a periodic system from the spectral radius of its period map.

    The rate in the certificate is per step, the per-period rate raised to 1/tau.
    """
    tau = sys.period
    if tau is None:
        raise NotPeriodic("esms_monodromy needs a periodic schedule")
    A = period_map(sys)
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    verdict = _verdict_from_rho(rho, tol)
    evidence = Evidence("monodromy", rho=rho, dimension=A.shape[0], period=tau)
    if verdict != ESMS:
        return EsmsCertificate(verdict, None, None, evidence)
    lam = _padded(rho) ** (1.0 / tau)
    return EsmsCertificate(verdict, _beta(sys, lam, tau, BETA_POWERS * tau), lam, evidence)


def _fit_rate(traces):
    """Per-step geometric rate and RMS log residual over the tail half of a trace sequence."""
    h = len(traces) - 1
    idx = np.arange(h // 2, h + 1)
    pos = idx[traces[idx] > 0]
    if len(pos) < 2:
        pos = np.flatnonzero(traces > 0)
    if len(pos) < 2:
        return 0.0, 0.0
    y = np.log(traces[pos])
    slope, intercept = np.polyfit(pos, y, 1)
    resid = y - (slope * pos + intercept)
    rate = 0.0 if np.any(traces[pos[-1] + 1:] == 0) else math.exp(slope)
    return rate, float(np.sqrt(np.mean(resid ** 2)))


def esms_empirical(sys, k0=0, horizon=100, margin=EMPIRICAL_MARGIN, max_residual=EMPIRICAL_MAX_RESIDUAL):
    """Fit the decay of trace(X_k) from X[k0] = I over a finite horizon.

    Returns ESMS only with a clear margin (fitted rate < 1 - margin and a small
    fit residual).  A finite window cannot refute ESMS, so NotESMS is reported
    only heuristically, when the trace grows past 1e12 times its start.
    """
    if horizon < 10:
        raise InputError("empirical fit needs horizon >= 10")
    traj = propagate_second_moment(sys, np.eye(sys.n), k0, horizon)
    tr = traj.traces
    if np.max(tr) > DIVERGENCE_LEVEL * tr[0]:
        rate, res = _fit_rate(tr)
        ev = Evidence("empirical-fit", horizon=horizon, fitted_rate=rate, residual=res, heuristic=True)
        return EsmsCertificate(NOT_ESMS, None, None, ev)
    rate, res = _fit_rate(tr)
    ev = Evidence("empirical-fit", horizon=horizon, fitted_rate=rate, residual=res)
    if rate < 1 - margin and res <= max_residual:
        lam = min(max(rate, LAMBDA_PAD) + LAMBDA_PAD, 1 - margin)
        with np.errstate(over="ignore"):
            ratios = tr / lam ** np.arange(len(tr))
        beta = max(1.0, float(np.max(ratios)))
        if math.isfinite(beta):
            return EsmsCertificate(ESMS, beta, lam, ev)
    return EsmsCertificate(INCONCLUSIVE, None, None, ev)


# -- Monte Carlo ----------------------------------------------------------------

def thread_count(threads=None):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("STOCHECK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"STOCHECK_THREADS must be an integer, got {env!r}") from None
    return 1


@dataclass(frozen=True, eq=False)
class SimulationEstimate:
    k0: int
    horizon: int
    paths: int
    seed: int
    law: str
    mean_sq_state: np.ndarray
    stderr_state: np.ndarray
    mean_sq_output: np.ndarray
    stderr_output: np.ndarray

    @property
    def steps(self):
        return np.arange(self.k0, self.k0 + self.horizon + 1)


def _block_noise(noise, block, count, T):
    # Philox is counter-based: (seed, block) selects an independent substream
    rng = np.random.Generator(np.random.Philox(key=int(noise.seed) + (block << 64)))
    if noise.law == "gaussian":
        return rng.standard_normal((T, count))
    return rng.integers(0, 2, size=(T, count)).astype(float) * 2.0 - 1.0


def _simulate_block(coeffs, x0, noise, block, count):
    T = len(coeffs) - 1
    W = _block_noise(noise, block, count, T)
    x = np.tile(x0, (count, 1))
    sx = np.empty((T + 1, count))
    sy = np.empty((T + 1, count))
    for j, c in enumerate(coeffs):
        sx[j] = np.einsum("pi,pi->p", x, x)
        y = x @ c.H.T
        sy[j] = np.einsum("pi,pi->p", y, y)
        if j < T:
            x = x @ c.F.T + (x @ c.G.T) * W[j][:, None]
    return (count, sx.mean(axis=1), ((sx - sx.mean(axis=1, keepdims=True)) ** 2).sum(axis=1),
            sy.mean(axis=1), ((sy - sy.mean(axis=1, keepdims=True)) ** 2).sum(axis=1))


def _merge(a, b):
    # Chan et al. pairwise update of (count, mean, M2)
    na, ma, qa = a
    nb, mb, qb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), qa + qb + delta ** 2 * (na * nb / n)


def simulate(sys, x0, k0=0, T=50, paths=10000, noise=None, threads=None):
    """Sample paths of x[k+1] = F x + G x w and estimate E|x_k|^2 and E|y_k|^2.

    Paths are split into fixed blocks of BLOCK_PATHS, each drawing noise from
    its own Philox substream keyed by (seed, block index), and block results
    are merged in block order.  The estimate is therefore a deterministic
    function of the inputs and the seed, whatever the thread count.

    Parameters
    ----------
    sys : SystemSchedule
    x0 : array_like
        Deterministic initial state at time ``k0``.
    T : int
        Number of steps; estimates cover k0 .. k0 + T.
    paths : int
    noise : NoiseModel, optional
        Defaults to Rademacher noise with seed 0.
    threads : int, optional
        Worker count; defaults to ``STOCHECK_THREADS`` or 1.

    Returns
    -------
    SimulationEstimate
    """
    if paths < 1 or T < 1:
        raise InputError("simulate needs paths >= 1 and T >= 1")
    noise = noise or NoiseModel()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n,):
        raise InputError(f"x0 must have length {sys.n}")
    sys.check_window(k0, k0 + T)
    coeffs = [sys.coeff(k) for k in range(k0, k0 + T + 1)]
    counts = [min(BLOCK_PATHS, paths - s) for s in range(0, paths, BLOCK_PATHS)]

    def run(b):
        return _simulate_block(coeffs, x0, noise, b, counts[b])

    workers = thread_count(threads)
    if workers == 1 or len(counts) == 1:
        results = [run(b) for b in range(len(counts))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(len(counts))))

    acc_x = (results[0][0], results[0][1], results[0][2])
    acc_y = (results[0][0], results[0][3], results[0][4])
    for r in results[1:]:
        acc_x = _merge(acc_x, (r[0], r[1], r[2]))
        acc_y = _merge(acc_y, (r[0], r[3], r[4]))

    def stderr(acc):
        n, _, q = acc
        if n < 2:
            return np.zeros_like(q)
        return np.sqrt(np.maximum(q, 0.0) / (n - 1) / n)

    return SimulationEstimate(int(k0), int(T), int(paths), int(noise.seed), noise.law,
                              acc_x[1], stderr(acc_x), acc_y[1], stderr(acc_y))


def write_simulation_csv(est, path):
    """Per-step CSV with columns k, mean_sq_state, stderr_state, mean_sq_output, stderr_output."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "mean_sq_state", "stderr_state", "mean_sq_output", "stderr_output"])
        for i, k in enumerate(est.steps):
            w.writerow([int(k)] + [format(float(a[i]), ".17g") for a in
                                   (est.mean_sq_state, est.stderr_state, est.mean_sq_output, est.stderr_output)])
