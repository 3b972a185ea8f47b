"""Acceptance suite: the ten release criteria at their stated tolerances.

Each test is one criterion.  Sub-checks are collected rather than stopping at
the first failure, so a failing criterion names every part that missed.  The
per-criterion PASS/FAIL lines are printed in the terminal summary (see
conftest.py).  Run alone with ``python3 -m pytest -m acceptance``.
"""

import math
import time

import numpy as np
import pytest

from oracles import brute_uniform_detectability, path_gramians
from stocheck import (DetectabilityWindow, FeedbackSchedule, NoiseModel, SystemSchedule, Tail,
                      esms_monodromy, exact_detectability_kinf, exact_detectability_kN,
                      exact_observability_kN, gle_backward, gle_limit, gle_periodic_fixed_point,
                      glo_spectrum, is_psd, kwft_probe, observability_gramian, output_injection_loop,
                      propagate_second_moment, s_procedure, search_uniform_detectability, simulate,
                      stacked_output_map, stacked_transition, transition_gramian,
                      uniform_detectability_check, unobservable_subspace, verify_lyapunov_theorem)
from stocheck.detectability import NO, YES
from stocheck.fixtures import (alternating_output, inverse_index_output, period_three_noise,
                               random_system, square_index_output)
from stocheck.stability import ESMS, NOT_ESMS

pytestmark = pytest.mark.acceptance


class Checks:
    def __init__(self, request, limit):
        self.request = request
        self.limit = limit
        self.failed = []
        self.t0 = time.perf_counter()

    def check(self, ok, label):
        if not ok:
            self.failed.append(label)

    def finish(self):
        elapsed = time.perf_counter() - self.t0
        self.request.node.criterion_elapsed = elapsed
        self.check(elapsed < self.limit, f"runtime {elapsed:.2f} s >= {self.limit} s")
        assert not self.failed, "; ".join(self.failed)


def _sup(A):
    return float(np.max(np.abs(A))) if A.size else 0.0


def _is_square(i):
    return i > 0 and math.isqrt(i) ** 2 == i


# 1 ---------------------------------------------------------------------------

@pytest.mark.criterion(1, "inverse-index output: Gramian sums, grid No, K^N observable", 1)
def test_criterion_01_inverse_index_output(request):
    c = Checks(request, 1.0)
    s = inverse_index_output()
    worst = 0.0
    for k in range(1, 101):
        for l in range(k, k + 21):
            exact = math.fsum(1.0 / (i * i) for i in range(k, l + 1))
            worst = max(worst, abs(observability_gramian(s, k, l).O[0, 0] - exact))
    c.check(worst <= 1e-12, f"Gramian sum error {worst:.3e}")
    v = search_uniform_detectability(s, range(1, 990))
    c.check(v.holds == NO and len(v.failures) > 0, f"grid search returned {v.holds}")
    for N in range(11):
        ok = exact_observability_kN(s, N, range(0, 101)).holds == YES
        c.check(ok, f"K^{N} observability")
    c.finish()


# 2 ---------------------------------------------------------------------------

@pytest.mark.criterion(2, "alternating output: K^1 observable, K^0 not detectable, uniform Yes", 1)
def test_criterion_02_alternating_output(request):
    c = Checks(request, 1.0)
    s = alternating_output()
    c.check(exact_observability_kN(s, 1, range(0, 201)).holds == YES, "K^1 observability")
    v = exact_detectability_kN(s, 0, range(0, 201))
    c.check(v.holds == NO, f"K^0 detectability {v.holds}")
    c.check(bool(v.failures) and v.failures[0].k % 2 == 1, "K^0 witness not at odd k")
    u = uniform_detectability_check(s, DetectabilityWindow(1, 0, 0.5, 0.5), range(0, 201))
    c.check(u.holds == YES, f"uniform detectability {u.holds}")
    c.finish()


# 3 ---------------------------------------------------------------------------

@pytest.mark.criterion(3, "square-index output: K^N No, K^inf Yes at cap, window growth", 10)
def test_criterion_03_square_index_output(request):
    c = Checks(request, 10.0)
    s = square_index_output()
    for N in range(31):
        v = exact_detectability_kN(s, N, range(0, 1200))
        c.check(v.holds == NO, f"K^{N} returned {v.holds}")
        if v.failures:
            k = v.failures[0].k
            c.check(not any(_is_square(i) for i in range(k, k + N + 1)),
                    f"K^{N} witness k={k} sees a square")
    v = exact_detectability_kinf(s, range(0, 31), horizon_cap=1200)
    c.check(v.holds == YES and v.range_limited, f"K^inf returned {v.holds}, range_limited={v.range_limited}")
    ks = [j * j + 1 for j in range(1, 31)]
    probe = kwft_probe(s, ks, cap=1200)
    sk = [probe.windows[k] for k in ks]
    c.check(all(x is not None for x in sk), "a probed window exceeded the cap")
    if all(x is not None for x in sk):
        c.check(all(a < b for a, b in zip(sk, sk[1:])), "s_k not strictly increasing")
        c.check(all(x <= k * k - k for x, k in zip(sk, ks)), "s_k above k^2 - k")
        c.check(sk == [2 * j for j in range(1, 31)], "s_k differs from the gap to the next square")
    c.check(probe.wft_pattern, "window pattern not flagged as unbounded")
    c.finish()


# 4 ---------------------------------------------------------------------------

@pytest.mark.criterion(4, "period-3 noise: K^3 Yes, K^2 No, injections never ESMS", 5)
def test_criterion_04_period_three_noise(request):
    c = Checks(request, 5.0)
    s = period_three_noise()
    v3 = exact_detectability_kN(s, 3, range(3), mode="periodic")
    c.check(v3.holds == YES, f"K^3 returned {v3.holds}")
    c.check(all(unobservable_subspace(s, k, 3).is_trivial for k in range(3)), "K^3 kernels not trivial")
    v2 = exact_detectability_kN(s, 2, range(3), mode="periodic")
    c.check(v2.holds == NO, f"K^2 returned {v2.holds} (kernels at N=2 are all trivial in this encoding)")
    rng = np.random.default_rng(2024)
    for trial in range(20):
        tau = int(rng.choice([1, 2, 3, 4, 6]))
        gains = FeedbackSchedule(tuple(rng.uniform(-10, 10, (1, 1)) for _ in range(tau)),
                                 Tail.periodic(tau) if tau > 1 else Tail.constant())
        loop = output_injection_loop(s, gains)
        cert = esms_monodromy(loop)
        per_three = cert.evidence.rho ** (3.0 / loop.period)
        c.check(cert.verdict == NOT_ESMS, f"gain schedule {trial} gave {cert.verdict}")
        c.check(per_three >= 9 ** 3 * (1 - 1e-12), f"gain schedule {trial}: factor {per_three:.6g} < 729")
    c.finish()


# 5, 6 ------------------------------------------------------------------------

def _duality_corpus():
    rng = np.random.default_rng(55)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 4))
        length = int(rng.integers(1, 5))
        sys = random_system(rng, n, m=m, rho=rng.uniform(0.3, 1.3), noise=rng.uniform(0, 0.8),
                            length=length, control=False)
        k = int(rng.integers(0, 6))
        w = int(rng.integers(0, 9))
        yield sys, k, k + w


@pytest.mark.criterion(5, "Gramian / stacked-map duality on 200 random systems", 30)
def test_criterion_05_gramian_stack_duality(request):
    c = Checks(request, 30.0)
    bad = 0
    for sys, k, l in _duality_corpus():
        H = stacked_output_map(sys, k, l).rows
        phi = stacked_transition(sys, k, l).rows
        O = observability_gramian(sys, k, l).O
        M = transition_gramian(sys, k, l).M
        ok_o = _sup(H.T @ H - O) <= 1e-10 * (1 + _sup(O))
        ok_m = _sup(phi.T @ phi - M) <= 1e-10 * (1 + _sup(M))
        bad += not (ok_o and ok_m)
    c.check(bad == 0, f"{bad}/200 systems outside tolerance")
    # an independent oracle on a few small windows, so the duality is not circular
    rng = np.random.default_rng(7)
    for _ in range(5):
        sys = random_system(rng, 2, m=2, length=3, control=False)
        Mo, Oo = path_gramians(sys, 1, 6)
        c.check(_sup(transition_gramian(sys, 1, 6).M - Mo) <= 1e-10 * (1 + _sup(Mo)), "path oracle M")
        c.check(_sup(observability_gramian(sys, 1, 6).O - Oo) <= 1e-10 * (1 + _sup(Oo)), "path oracle O")
    c.finish()


@pytest.mark.criterion(6, "GLE backward solution equals O and grows with T", 30)
def test_criterion_06_gle_duality_and_monotonicity(request):
    c = Checks(request, 30.0)
    dual_bad = mono_bad = 0
    for sys, k, l in _duality_corpus():
        T = l + 1
        sol = gle_backward(sys, k, T)
        P = sol.at(k)
        O = observability_gramian(sys, k, T - 1).O
        dual_bad += not (_sup(P - O) <= 1e-12)
        prev = np.zeros((sys.n, sys.n))
        for TT in range(k + 1, T + 1):
            cur = gle_backward(sys, k, TT).at(k)
            mono_bad += np.linalg.eigvalsh(cur - prev)[0] < -1e-12 * (1 + _sup(cur))
            prev = cur
    c.check(dual_bad == 0, f"{dual_bad}/200 duality gaps above 1e-12")
    c.check(mono_bad == 0, f"{mono_bad} monotonicity violations")
    c.finish()


# 7 ---------------------------------------------------------------------------

def _stable_periodic_corpus(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(1, 4))
        tau = int(rng.integers(1, 5))
        sys = random_system(rng, n, m=int(rng.integers(1, 3)), rho=rng.uniform(0.3, 1.1),
                            noise=rng.uniform(0, 0.6), length=tau, tail=Tail.periodic(tau), control=False)
        if esms_monodromy(sys).evidence.rho < 0.95:
            out.append(sys)
    return out


@pytest.mark.criterion(7, "Lyapunov round trip on 100 stable periodic systems", 60)
def test_criterion_07_lyapunov_round_trip(request):
    c = Checks(request, 60.0)
    res_bad = gap_bad = agree = 0
    for sys in _stable_periodic_corpus(100, 77):
        fp = gle_periodic_fixed_point(sys)
        res_bad += not (fp.max_residual <= 1e-10)
        lim = gle_limit(sys, check_uniqueness=True)
        gap_bad += not (lim.uniqueness_gap <= 1e-8)
        v = verify_lyapunov_theorem("T5.3.1", sys)
        agree += (v.conclusion == ESMS) == (esms_monodromy(sys).verdict == ESMS)
    c.check(res_bad == 0, f"{res_bad}/100 fixed-point residuals above 1e-10")
    c.check(gap_bad == 0, f"{gap_bad}/100 uniqueness gaps above 1e-8")
    c.check(agree == 100, f"theorem conclusion agreed in {agree}/100")
    c.finish()


# 8 ---------------------------------------------------------------------------

@pytest.mark.criterion(8, "Monte Carlo against exact second moments, thread-independent", 120)
def test_criterion_08_monte_carlo(request, monkeypatch):
    c = Checks(request, 120.0)
    rng = np.random.default_rng(88)
    ok = {"rademacher": 0, "gaussian": 0}
    identical = True
    for i in range(20):
        n = int(rng.integers(1, 4))
        sys = random_system(rng, n, rho=0.9, noise=0.05, control=False)
        x0 = rng.standard_normal(n)
        exact = np.array(propagate_second_moment(sys, np.outer(x0, x0), 0, 50).traces)
        for law in ok:
            noise = NoiseModel(law, 1000 + i)
            monkeypatch.setenv("STOCHECK_THREADS", "1")
            a = simulate(sys, x0, T=50, paths=100_000, noise=noise)
            gap = np.abs(a.mean_sq_state - exact)
            ok[law] += bool(np.all((gap <= 5 * a.stderr_state) | (gap <= 1e-12 * exact)))
            monkeypatch.setenv("STOCHECK_THREADS", "8")
            b = simulate(sys, x0, T=50, paths=100_000, noise=noise)
            identical &= np.array_equal(a.mean_sq_state, b.mean_sq_state)
            identical &= np.array_equal(a.stderr_state, b.stderr_state)
            identical &= np.array_equal(a.mean_sq_output, b.mean_sq_output)
    for law, hits in ok.items():
        c.check(hits >= 19, f"{law}: {hits}/20 systems within 5 standard errors")
    c.check(identical, "reruns differ between 1 and 8 threads")
    c.finish()


# 9 ---------------------------------------------------------------------------

def _sproc_instance(rng):
    n = int(rng.integers(1, 4))
    r = int(rng.integers(0, n + 1))
    R = rng.standard_normal((n, r))
    M = R @ R.T + (np.eye(n) * rng.uniform(0, 1) if rng.random() < 0.5 else 0)
    r = int(rng.integers(0, n + 1))
    R = rng.standard_normal((n, r))
    O = R @ R.T
    d, b = rng.uniform(0.05, 1.2), rng.uniform(0.05, 1.2)
    return M, O, d, b


@pytest.mark.criterion(9, "S-procedure against sphere enumeration, 100 instances", 60)
def test_criterion_09_s_procedure(request):
    c = Checks(request, 60.0)
    rng = np.random.default_rng(99)
    agree = counted = banded = 0
    while counted < 100:
        M, O, d, b = _sproc_instance(rng)
        n = M.shape[0]
        margin = brute_uniform_detectability(M, O, d, b, count=100_000)
        if abs(margin) <= 1e-6:
            banded += 1
            continue
        r = s_procedure(M - d * d * np.eye(n), O - b * b * np.eye(n))
        counted += 1
        agree += r.holds == (margin > 0)
    c.check(agree == 100, f"agreement {agree}/100 ({banded} instances inside the band skipped)")
    c.finish()


# 10 --------------------------------------------------------------------------

def _ti_candidate(rng):
    n = int(rng.integers(1, 4))
    F = rng.standard_normal((n, n))
    G = rng.standard_normal((n, n))
    H = rng.standard_normal((int(rng.integers(1, 3)), n))
    kind = rng.integers(0, 3)
    if kind == 1:
        H[:, 0] = 0.0
    beta = glo_spectrum(F, G).beta
    target = rng.uniform(0.4, 1.0) if rng.random() < 0.7 else 1.0
    scale = math.sqrt(target / beta) if beta > 0 else 1.0
    return SystemSchedule.time_invariant(F * scale, G * scale, H)


@pytest.mark.criterion(10, "time-invariant hypotheses force beta < 1, with PSD witness", 60)
def test_criterion_10_spectral_radius_property(request):
    c = Checks(request, 60.0)
    rng = np.random.default_rng(1010)
    kept = tried = 0
    below = witnessed = real_top = 0
    while kept < 50:
        tried += 1
        sys = _ti_candidate(rng)
        v = verify_lyapunov_theorem("T5.1.2", sys)
        if not all(h.passed for h in v.hypotheses):
            continue
        kept += 1
        e = sys.entries[0]
        glo = glo_spectrum(e.F, e.G)
        below += glo.beta < 1
        top = glo.eigenvalues[np.argmax(np.abs(glo.eigenvalues))]
        if abs(np.imag(top)) <= 1e-9 * max(1.0, glo.beta):
            real_top += 1
            witnessed += bool(glo.witness_found) and is_psd(glo.X, 1e-8)
    c.check(below == 50, f"beta < 1 in {below}/50 ({tried} candidates drawn)")
    c.check(witnessed == real_top, f"PSD witness in {witnessed}/{real_top} real-top cases")
    c.finish()


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
