import json

import numpy as np
import pytest

from stocheck import (DimensionMismatch, FeedbackSchedule, IndexBeyondSchedule, InputError,
                      NoControlChannel, NoiseModel, StepCoefficients, SystemSchedule, Tail,
                      closed_loop, dump_system, load_system, output_injection_loop, parse_system)
from stocheck.fixtures import alternating_output, period_three_noise
from stocheck.system import scalar_schedule


def test_periodic_lookup_wraps():
    s = alternating_output()
    assert [float(s.coeff(k).H[0, 0]) for k in range(5)] == [1, 0, 1, 0, 1]
    assert s.period == 2


def test_constant_tail_repeats_last_entry():
    s = scalar_schedule([1.0, 2.0], [0, 0], [1, 1], Tail.constant())
    assert s.coeff(10).F[0, 0] == 2.0
    assert s.period is None and s.horizon is None


def test_finite_tail_raises_past_the_end():
    s = scalar_schedule([1.0, 2.0], [0, 0], [1, 1])
    with pytest.raises(IndexBeyondSchedule):
        s.coeff(2)
    with pytest.raises(IndexBeyondSchedule):
        s.coeff(-1)


def test_periodic_tail_length_must_match_period():
    with pytest.raises(InputError):
        SystemSchedule((StepCoefficients([[1.0]], [[0.0]], [[1.0]]),), Tail.periodic(2))


def test_coefficients_are_read_only_and_finite():
    c = StepCoefficients([[1.0]], [[0.0]], [[1.0]])
    with pytest.raises(ValueError):
        c.F[0, 0] = 3.0
    with pytest.raises(InputError):
        StepCoefficients([[np.nan]], [[0.0]], [[1.0]])


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        StepCoefficients(np.eye(2), np.eye(3), np.ones((1, 2)))
    with pytest.raises(DimensionMismatch):
        StepCoefficients(np.eye(2), np.eye(2), np.ones((1, 3)))
    with pytest.raises(DimensionMismatch):
        SystemSchedule((StepCoefficients(np.eye(2), np.eye(2), np.ones((1, 2))),
                        StepCoefficients(np.eye(2), np.eye(2), np.ones((2, 2)))), Tail.finite())


def test_closed_loop_formula():
    rng = np.random.default_rng(0)
    F, G, H = rng.standard_normal((3, 3)), rng.standard_normal((3, 3)), rng.standard_normal((2, 3))
    M, N = rng.standard_normal((3, 1)), rng.standard_normal((3, 1))
    K = rng.standard_normal((1, 2))
    s = SystemSchedule.time_invariant(F, G, H, M, N)
    cl = closed_loop(s, FeedbackSchedule((K,)))
    np.testing.assert_allclose(cl.coeff(0).F, F + M @ K @ H)
    np.testing.assert_allclose(cl.coeff(0).G, G + N @ K @ H)
    assert cl.is_time_invariant


def test_closed_loop_needs_control_channel():
    with pytest.raises(NoControlChannel):
        closed_loop(alternating_output(), FeedbackSchedule((np.ones((1, 1)),)))


def test_injection_loop_period_is_lcm():
    s = period_three_noise()
    gains = FeedbackSchedule(tuple(np.array([[g]]) for g in (1.0, 2.0)), Tail.periodic(2))
    loop = output_injection_loop(s, gains)
    assert loop.period == 6
    assert loop.coeff(0).F[0, 0] == 2.0   # 1 + 1 * 1
    assert loop.coeff(3).F[0, 0] == 3.0   # 1 + 2 * 1


def test_parse_round_trip(tmp_path):
    s = period_three_noise()
    path = tmp_path / "sys.json"
    dump_system(s, path)
    again = load_system(path)
    assert again.period == 3
    assert all(a == b for a, b in zip(s.entries, again.entries))


@pytest.mark.parametrize("bad", [
    "not json",
    "[]",
    '{"n": 1, "m": 1, "entries": []}',
    '{"n": 1, "m": 1, "entries": [{"F": [[1]], "G": [[0]]}]}',
    '{"n": 1, "m": 1, "entries": [{"F": [[1, 2]], "G": [[0]], "H": [[1]]}]}',
    '{"n": 2, "m": 1, "entries": [{"F": [[1, 0], [0]], "G": [[0, 0], [0, 0]], "H": [[1, 0]]}]}',
    '{"n": 1, "m": 1, "entries": [{"F": [[NaN]], "G": [[0]], "H": [[1]]}]}',
    '{"n": 1, "m": 1, "entries": [{"F": [[Infinity]], "G": [[0]], "H": [[1]]}]}',
    '{"n": 1, "m": 1, "entries": [{"F": [[true]], "G": [[0]], "H": [[1]]}]}',
    '{"n": 1, "m": 1, "entries": [{"F": [["1"]], "G": [[0]], "H": [[1]]}]}',
    '{"n": 1, "m": 1, "p": 1, "entries": [{"F": [[1]], "G": [[0]], "H": [[1]]}]}',
    '{"n": 1, "m": 1, "tail": {"kind": "periodic", "period": 2}, "entries": [{"F": [[1]], "G": [[0]], "H": [[1]]}]}',
    '{"n": 1, "m": 1, "tail": {"kind": "spiral"}, "entries": [{"F": [[1]], "G": [[0]], "H": [[1]]}]}',
    '{"n": 0, "m": 1, "entries": [{"F": [[1]], "G": [[0]], "H": [[1]]}]}',
])
def test_parse_rejects_malformed(bad):
    with pytest.raises(InputError):
        parse_system(bad)


def test_parse_accepts_control_channel():
    obj = {"n": 1, "m": 1, "p": 1, "entries": [{"F": [[1]], "G": [[0]], "H": [[1]], "M": [[1]], "N": [[0]]}]}
    s = parse_system(json.dumps(obj))
    assert s.p == 1 and s.coeff(0).M[0, 0] == 1.0


def test_noise_model_validation():
    with pytest.raises(InputError):
        NoiseModel("cauchy")
    with pytest.raises(InputError):
        NoiseModel(seed=2 ** 64)


def test_closed_loop_scalar_substitution():
    s = SystemSchedule.time_invariant([[0.0]], [[3.0]], [[1.0]], [[1.0]], [[0.0]])
    cl = closed_loop(s, FeedbackSchedule((np.array([[2.0]]),)))
    assert cl.coeff(0).F[0, 0] == 2.0 and cl.coeff(0).G[0, 0] == 3.0
    assert cl.coeff(0).M is None and cl.tail.kind == "constant"


def test_zero_gain_keeps_open_loop():
    s = SystemSchedule.time_invariant([[0.4]], [[0.3]], [[1.0]], [[1.0]], [[1.0]])
    cl = closed_loop(s, FeedbackSchedule((np.zeros((1, 1)),)))
    assert cl.coeff(0) == StepCoefficients([[0.4]], [[0.3]], [[1.0]])
    loop = output_injection_loop(s, [np.zeros((1, 1))])
    assert loop.coeff(0).F[0, 0] == 0.4


def test_injection_cancels_and_leaves_noise_alone():
    s = scalar_schedule([1.0], [0.0], [1.0])
    assert output_injection_loop(s, [np.array([[-1.0]])]).coeff(0).F[0, 0] == 0.0
    loop = output_injection_loop(period_three_noise(), [np.array([[5.0]])])
    assert all(loop.coeff(k).G[0, 0] == 3.0 for k in range(6))


def test_lookup_boundary_cases():
    A = StepCoefficients([[1.0]], [[0.0]], [[1.0]])
    B = StepCoefficients([[2.0]], [[0.0]], [[1.0]])
    assert SystemSchedule((A, B), Tail.periodic(2)).coeff(5) == B
    assert SystemSchedule((A,), Tail.constant()).coeff(10 ** 6) == A
    with pytest.raises(IndexBeyondSchedule):
        SystemSchedule((A, B, A), Tail.finite()).coeff(3)
