"""Coefficient schedules for linear discrete-time time-varying systems with
multiplicative noise,

    x[k+1] = F[k] x[k] + G[k] x[k] w[k],    y[k] = H[k] x[k],

optionally with a control channel ``(M[k] u[k]) + (N[k] u[k]) w[k]``.

A schedule is a finite list of per-step coefficients plus a tail rule that
says how the list extends to all k >= 0.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, IndexBeyondSchedule, InputError, NoControlChannel

__all__ = [
    "Tail", "StepCoefficients", "SystemSchedule", "FeedbackSchedule", "NoiseModel",
    "coeff", "closed_loop", "output_injection_loop",
    "parse_system", "load_system", "system_to_dict", "dump_system", "scalar_schedule",
]

CONSTANT = "constant"
PERIODIC = "periodic"
FINITE = "finite"


def _frozen(a, name):
    arr = np.array(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Tail:
    """How a finite list of entries extends to every k >= 0."""

    kind: str = CONSTANT
    period: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (CONSTANT, PERIODIC, FINITE):
            raise InputError(f"unknown tail kind {self.kind!r}")
        if self.kind == PERIODIC:
            if self.period is None or int(self.period) < 1:
                raise InputError("periodic tail requires period >= 1")
            object.__setattr__(self, "period", int(self.period))
        elif self.period is not None:
            raise InputError(f"{self.kind} tail takes no period")

    @classmethod
    def constant(cls):
        return cls(CONSTANT)

    @classmethod
    def periodic(cls, period):
        return cls(PERIODIC, period)

    @classmethod
    def finite(cls):
        return cls(FINITE)


def _check_tail_length(tail, length):
    if length < 1:
        raise InputError("a schedule needs at least one entry")
    if tail.kind == PERIODIC and length != tail.period:
        raise InputError(
            f"periodic tail with period {tail.period} needs exactly {tail.period} entries, got {length}")


def _lookup(length, tail, k):
    k = int(k)
    if k < 0:
        raise IndexBeyondSchedule(f"negative time index {k}")
    if k < length:
        return k
    if tail.kind == CONSTANT:
        return length - 1
    if tail.kind == PERIODIC:
        return k % tail.period
    raise IndexBeyondSchedule(f"k={k} is beyond the finite schedule of length {length}")


@dataclass(frozen=True, eq=False)
class StepCoefficients:
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    M: Optional[np.ndarray] = None
    N: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("F", "G", "H"):
            object.__setattr__(self, name, _frozen(getattr(self, name), name))
        if (self.M is None) != (self.N is None):
            raise DimensionMismatch("M and N must be given together")
        if self.M is not None:
            object.__setattr__(self, "M", _frozen(self.M, "M"))
            object.__setattr__(self, "N", _frozen(self.N, "N"))
        n = self.F.shape[0]
        if self.F.shape != (n, n) or self.G.shape != (n, n):
            raise DimensionMismatch(f"F and G must be {n}x{n}, got {self.F.shape} and {self.G.shape}")
        if self.H.shape[1] != n:
            raise DimensionMismatch(f"H must have {n} columns, got shape {self.H.shape}")
        if self.M is not None:
            if self.M.shape[0] != n or self.M.shape != self.N.shape:
                raise DimensionMismatch(
                    f"M and N must both be {n}xp, got {self.M.shape} and {self.N.shape}")

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def m(self):
        return self.H.shape[0]

    @property
    def p(self):
        return 0 if self.M is None else self.M.shape[1]

    def __eq__(self, other):
        if not isinstance(other, StepCoefficients):
            return NotImplemented
        pairs = [(self.F, other.F), (self.G, other.G), (self.H, other.H)]
        if (self.M is None) != (other.M is None):
            return False
        if self.M is not None:
            pairs += [(self.M, other.M), (self.N, other.N)]
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in pairs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SystemSchedule:
    """Finite description of the coefficient sequences F[k], G[k], H[k] (and M[k], N[k]).

    Parameters
    ----------
    entries : sequence of StepCoefficients
        Coefficients for k = 0 .. L-1.
    tail : Tail
        ``constant`` repeats the last entry, ``periodic`` repeats the whole list
        (which must then have length equal to the period), ``finite`` makes any
        k >= L an error.
    """

    entries: tuple
    tail: Tail = field(default_factory=Tail.constant)

    def __post_init__(self):
        entries = tuple(e if isinstance(e, StepCoefficients) else StepCoefficients(**e)
                        for e in self.entries)
        object.__setattr__(self, "entries", entries)
        _check_tail_length(self.tail, len(entries))
        first = entries[0]
        for k, e in enumerate(entries):
            if (e.n, e.m, e.p) != (first.n, first.m, first.p):
                raise DimensionMismatch(
                    f"entry {k} has (n, m, p) = {(e.n, e.m, e.p)}, expected {(first.n, first.m, first.p)}")

    @classmethod
    def time_invariant(cls, F, G, H, M=None, N=None):
        return cls((StepCoefficients(F, G, H, M, N),), Tail.constant())

    @classmethod
    def periodic(cls, entries):
        entries = list(entries)
        return cls(tuple(entries), Tail.periodic(len(entries)))

    @classmethod
    def finite(cls, entries):
        return cls(tuple(entries), Tail.finite())

    @property
    def n(self):
        return self.entries[0].n

    @property
    def m(self):
        return self.entries[0].m

    @property
    def p(self):
        return self.entries[0].p

    @property
    def length(self):
        return len(self.entries)

    @property
    def horizon(self):
        """Number of valid time indices, or None when coefficients are defined for every k."""
        return self.length if self.tail.kind == FINITE else None

    @property
    def period(self):
        """Period of the schedule when it is periodic from k = 0 (time-invariant counts as 1)."""
        if self.tail.kind == PERIODIC:
            return self.tail.period
        if self.tail.kind == CONSTANT and self.length == 1:
            return 1
        return None

    @property
    def is_time_invariant(self):
        return self.period == 1

    def coeff(self, k):
        return self.entries[_lookup(self.length, self.tail, k)]

    def check_window(self, k, l):
        if k < 0 or l < k:
            raise IndexBeyondSchedule(f"invalid window [{k}, {l}]")
        if self.horizon is not None and l >= self.horizon:
            raise IndexBeyondSchedule(
                f"window [{k}, {l}] reaches beyond the finite schedule of length {self.horizon}")

    def bounds(self):
        """Largest spectral norms of F, G and H over the described entries."""
        return {name: max(float(np.linalg.norm(getattr(e, name), 2)) for e in self.entries)
                for name in ("F", "G", "H")}


def coeff(sys, k):
    """Coefficients in force at time ``k`` under the schedule's tail rule."""
    return sys.coeff(k)


@dataclass(frozen=True, eq=False)
class FeedbackSchedule:
    """Output-feedback gains K[k] with the same tail vocabulary as SystemSchedule."""

    gains: tuple
    tail: Tail = field(default_factory=Tail.constant)

    def __post_init__(self):
        gains = tuple(_frozen(K, "K") for K in self.gains)
        object.__setattr__(self, "gains", gains)
        _check_tail_length(self.tail, len(gains))
        shape = gains[0].shape
        for k, K in enumerate(gains):
            if K.shape != shape:
                raise DimensionMismatch(f"gain {k} has shape {K.shape}, expected {shape}")

    @property
    def length(self):
        return len(self.gains)

    @property
    def shape(self):
        return self.gains[0].shape

    def gain(self, k):
        return self.gains[_lookup(self.length, self.tail, k)]


@dataclass(frozen=True)
class NoiseModel:
    """Scalar white noise with zero mean and unit variance."""

    law: str = "rademacher"
    seed: int = 0

    def __post_init__(self):
        if self.law not in ("rademacher", "gaussian"):
            raise InputError(f"unknown noise law {self.law!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InputError("seed must be a 64-bit unsigned integer")


def _period_of(length, tail):
    if tail.kind == PERIODIC:
        return tail.period
    if tail.kind == CONSTANT and length == 1:
        return 1
    return None


def _combined_tail(len_a, tail_a, len_b, tail_b):
    """Tail and entry count of a pointwise combination of two schedules."""
    finite = [L for L, t in ((len_a, tail_a), (len_b, tail_b)) if t.kind == FINITE]
    if finite:
        return Tail.finite(), min(finite)
    if tail_a.kind == CONSTANT and tail_b.kind == CONSTANT:
        return Tail.constant(), max(len_a, len_b)
    pa, pb = _period_of(len_a, tail_a), _period_of(len_b, tail_b)
    if pa is not None and pb is not None:
        period = math.lcm(pa, pb)
        return Tail.periodic(period), period
    # constant tail after a prefix, combined with a periodic one: only the
    # described prefix is exactly representable
    return Tail.finite(), max(len_a, len_b)


def closed_loop(sys, fb):
    """Close the loop with output feedback u[k] = K[k] y[k].

    Returns the schedule with F + M K H and G + N K H, the same H, and no
    control channel.
    """
    if sys.p == 0:
        raise NoControlChannel("the system has no control channel (p = 0)")
    if fb.shape != (sys.p, sys.m):
        raise DimensionMismatch(f"gains must be {sys.p}x{sys.m}, got {fb.shape}")
    tail, length = _combined_tail(sys.length, sys.tail, fb.length, fb.tail)
    entries = []
    for k in range(length):
        c, K = sys.coeff(k), fb.gain(k)
        KH = K @ c.H
        entries.append(StepCoefficients(c.F + c.M @ KH, c.G + c.N @ KH, c.H))
    return SystemSchedule(tuple(entries), tail)


def output_injection_loop(sys, gains):
    """Loop F[k] + K[k] H[k] with G[k] untouched, for n x m gains K[k].

    ``gains`` is a FeedbackSchedule (or a sequence of matrices, taken with a
    constant tail).
    """
    if not isinstance(gains, FeedbackSchedule):
        gains = FeedbackSchedule(tuple(gains))
    if gains.shape != (sys.n, sys.m):
        raise DimensionMismatch(f"injection gains must be {sys.n}x{sys.m}, got {gains.shape}")
    tail, length = _combined_tail(sys.length, sys.tail, gains.length, gains.tail)
    entries = []
    for k in range(length):
        c, K = sys.coeff(k), gains.gain(k)
        entries.append(StepCoefficients(c.F + K @ c.H, c.G, c.H))
    return SystemSchedule(tuple(entries), tail)


# -- file format -------------------------------------------------------------

def _reject_constant(name):
    raise InputError(f"non-finite number {name} in system file")


def _matrix(value, what):
    if not isinstance(value, list) or not value:
        raise InputError(f"{what} must be a non-empty array of rows")
    width = None
    for i, row in enumerate(value):
        if not isinstance(row, list) or not row:
            raise InputError(f"{what} row {i} must be a non-empty array")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise InputError(f"{what} is ragged: row {i} has {len(row)} entries, expected {width}")
        for x in row:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise InputError(f"{what} row {i} contains a non-number: {x!r}")
            if not math.isfinite(x):
                raise InputError(f"{what} row {i} contains a non-finite number")
    return np.array(value, dtype=float)


def _tail_from_json(obj):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InputError("tail must be an object with a 'kind' field")
    kind = obj["kind"]
    if kind == PERIODIC:
        period = obj.get("period")
        if isinstance(period, bool) or not isinstance(period, int):
            raise InputError("periodic tail needs an integer 'period'")
        return Tail.periodic(period)
    if kind in (CONSTANT, FINITE):
        return Tail(kind)
    raise InputError(f"unknown tail kind {kind!r}")


def parse_system(text):
    """Build a SystemSchedule from the JSON system-file format (str or bytes)."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InputError(f"system file is not UTF-8: {exc}") from None
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise InputError("system file must hold a JSON object")
    for key in ("n", "m", "entries"):
        if key not in obj:
            raise InputError(f"missing field {key!r}")
    n, m, p = obj["n"], obj["m"], obj.get("p", 0)
    for name, v in (("n", n), ("m", m), ("p", p)):
        if isinstance(v, bool) or not isinstance(v, int) or v < 0 or (v == 0 and name != "p"):
            raise InputError(f"field {name!r} must be a {'non-negative' if name == 'p' else 'positive'} integer")
    tail = _tail_from_json(obj.get("tail", {"kind": CONSTANT}))
    raw = obj["entries"]
    if not isinstance(raw, list) or not raw:
        raise InputError("'entries' must be a non-empty array")
    entries = []
    for k, e in enumerate(raw):
        if not isinstance(e, dict):
            raise InputError(f"entry {k} must be an object")
        mats = {}
        for name in ("F", "G", "H", "M", "N"):
            if name in e:
                mats[name] = _matrix(e[name], f"entry {k} {name}")
            elif name in "FGH":
                raise InputError(f"entry {k} lacks {name}")
        if p > 0 and ("M" not in mats or "N" not in mats):
            raise InputError(f"entry {k} needs M and N when p > 0")
        if p == 0:
            mats.pop("M", None)
            mats.pop("N", None)
        expected = {"F": (n, n), "G": (n, n), "H": (m, n), "M": (n, p), "N": (n, p)}
        for name, a in mats.items():
            if a.shape != expected[name]:
                raise InputError(f"entry {k} {name} has shape {a.shape}, expected {expected[name]}")
        entries.append(StepCoefficients(**mats))
    try:
        return SystemSchedule(tuple(entries), tail)
    except DimensionMismatch as exc:
        raise InputError(str(exc)) from None


def load_system(path):
    return parse_system(Path(path).read_bytes())


def system_to_dict(sys):
    tail = {"kind": sys.tail.kind}
    if sys.tail.kind == PERIODIC:
        tail["period"] = sys.tail.period
    entries = []
    for e in sys.entries:
        d = {"F": e.F.tolist(), "G": e.G.tolist(), "H": e.H.tolist()}
        if e.M is not None:
            d["M"] = e.M.tolist()
            d["N"] = e.N.tolist()
        entries.append(d)
    return {"n": sys.n, "m": sys.m, "p": sys.p, "tail": tail, "entries": entries}


def dump_system(sys, path=None):
    text = json.dumps(system_to_dict(sys))
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def scalar_schedule(F: Sequence[float], G: Sequence[float], H: Sequence[float], tail=None):
    """Convenience constructor for scalar (n = m = 1) schedules."""
    entries = tuple(StepCoefficients([[f]], [[g]], [[h]]) for f, g, h in zip(F, G, H))
    if tail is None:
        tail = Tail.constant() if len(entries) == 1 else Tail.finite()
    return SystemSchedule(entries, tail)
