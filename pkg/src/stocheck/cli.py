"""``stocheck`` command line: analyses of a system file, reported as JSON.

Exit codes: 0 success, 2 input error, 3 domain error (window outside the
schedule, stack cap exceeded, wrong tail for the method), 4 numerical failure.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import detectability as det
from . import gramians, lyapunov, stability
from .errors import InputError, StocheckError
from .report import dumps, new_report
from .system import NoiseModel, parse_system


def _krange(args, sys_):
    k_to = args.k_to
    if k_to is None:
        k_to = (sys_.period or sys_.length) - 1
        if sys_.horizon is not None:
            k_to = min(k_to, sys_.horizon - 1)
    if k_to < args.k_from:
        raise InputError("--k-to must be >= --k-from")
    return range(args.k_from, k_to + 1)


def _verdict(v):
    return {
        "notion": v.notion,
        "params": v.params,
        "holds": v.holds,
        "k_range": {"first": v.k_range[0], "last": v.k_range[1], "count": v.k_range[2]},
        "range_limited": v.range_limited,
        "witnesses": [{"k": w.k, "kind": w.kind, "vector": w.vector, "info": w.info} for w in v.witnesses],
    }


def cmd_gramian(sys_, args):
    if args.kind == "transition":
        g = gramians.transition_gramian(sys_, args.k, args.l)
        return {"kind": "transition", "k": g.k, "l": g.l, "matrix": g.M}
    if args.kind == "observability":
        g = gramians.observability_gramian(sys_, args.k, args.l)
        return {"kind": "observability", "k": g.k, "l": g.l, "matrix": g.O}
    phi = gramians.stacked_transition(sys_, args.k, args.l, args.stack_cap)
    H = gramians.stacked_output_map(sys_, args.k, args.l, args.stack_cap)
    return {"kind": "stacked", "k": args.k, "l": args.l, "transition_rows": phi.rows,
            "output_rows": H.rows,
            "crosscheck_gap": gramians.gramian_crosscheck(sys_, args.k, args.l, args.stack_cap)}


def cmd_detect(sys_, args):
    ks = _krange(args, sys_)
    if args.notion == "uniform":
        if args.grid:
            v = det.search_uniform_detectability(sys_, ks, s_max=args.s_max)
        else:
            w = det.DetectabilityWindow(args.s, args.t, args.d, args.b)
            v = det.uniform_detectability_check(sys_, w, ks, exhaustive=args.exhaustive)
    elif args.notion == "uniform-obs":
        v = det.uniform_observability_check(sys_, args.s, args.b, ks, exhaustive=args.exhaustive)
    elif args.notion == "kN":
        v = det.exact_detectability_kN(sys_, args.N, ks, mode=args.mode, horizon=args.horizon,
                                       exhaustive=args.exhaustive)
    elif args.notion == "kN-obs":
        v = det.exact_observability_kN(sys_, args.N, ks, exhaustive=args.exhaustive)
    elif args.notion == "kinf":
        v = det.exact_detectability_kinf(sys_, ks, horizon_cap=args.cap, mode=args.mode,
                                         horizon=args.horizon, exhaustive=args.exhaustive)
    else:
        probe = det.kwft_probe(sys_, ks, cap=args.cap, mode=args.mode, horizon=args.horizon)
        return {"notion": "ExactDetectableKWFT", "cap": probe.cap, "wft_pattern": probe.wft_pattern,
                "windows": [{"k": k, "s_k": s} for k, s in sorted(probe.windows.items())]}
    return _verdict(v)


def _gle(sol):
    return {"kind": sol.kind, "k0": sol.k0, "P": sol.P, "residuals": sol.residuals,
            "max_residual": sol.max_residual, "T": sol.T, "gap": sol.gap,
            "uniqueness_gap": sol.uniqueness_gap, "period": sol.period}


def cmd_gle(sys_, args):
    if args.mode == "backward":
        return _gle(lyapunov.gle_backward(sys_, args.k0, args.T))
    if args.mode == "limit":
        return _gle(lyapunov.gle_limit(sys_, tol=args.tol, T_max=args.T_max))
    return _gle(lyapunov.gle_periodic_fixed_point(sys_))


def cmd_stability(sys_, args):
    if args.method == "spectral":
        return stability.esms_spectral(sys_).to_dict()
    if args.method == "monodromy":
        return stability.esms_monodromy(sys_).to_dict()
    if args.method == "empirical":
        return stability.esms_empirical(sys_, k0=args.k0, horizon=args.horizon).to_dict()
    x0 = np.ones(sys_.n) if args.x0 is None else np.array([float(v) for v in args.x0.split(",")])
    if x0.shape != (sys_.n,):
        raise InputError(f"--x0 needs {sys_.n} comma-separated values")
    est = stability.simulate(sys_, x0, k0=args.k0, T=args.horizon, paths=args.paths,
                             noise=NoiseModel(args.law, args.seed))
    exact = stability.propagate_second_moment(sys_, np.outer(x0, x0), args.k0, args.horizon).traces
    if args.csv:
        stability.write_simulation_csv(est, args.csv)
    return {"k0": est.k0, "horizon": est.horizon, "paths": est.paths, "seed": est.seed, "law": est.law,
            "mean_sq_state": est.mean_sq_state, "stderr_state": est.stderr_state,
            "mean_sq_output": est.mean_sq_output, "stderr_output": est.stderr_output,
            "exact_mean_sq_state": exact}


def cmd_verify(sys_, args):
    inputs = {"tol": args.tol}
    if args.N is not None:
        inputs["N"] = args.N
    if args.eps is not None:
        inputs["eps"] = args.eps
    if args.s is not None:
        inputs["window"] = det.DetectabilityWindow(args.s, args.t, args.d, args.b)
    if args.k_to is not None:
        inputs["k_range"] = range(args.k_from, args.k_to + 1)
    v = lyapunov.verify_lyapunov_theorem(args.theorem, sys_, inputs)
    return {"tag": v.tag, "conclusion": v.conclusion, "range_limited": v.range_limited,
            "hypotheses": [{"name": h.name, "passed": h.passed, "witness": h.witness} for h in v.hypotheses],
            "details": v.details}


COMMANDS = {"gramian": cmd_gramian, "detect": cmd_detect, "gle": cmd_gle,
            "stability": cmd_stability, "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="stocheck", description=__doc__.splitlines()[0])
    p.add_argument("--output", "-o", help="write the report here instead of stdout")
    sub = p.add_subparsers(dest="command", required=True)

    def with_file(name, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("file", help="system description (JSON)")
        return sp

    def with_krange(sp):
        sp.add_argument("--k-from", type=int, default=0)
        sp.add_argument("--k-to", type=int, default=None)

    g = with_file("gramian", "transition / observability Gramian or stacked maps")
    g.add_argument("--kind", choices=["transition", "observability", "stacked"], default="observability")
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--l", type=int, required=True)
    g.add_argument("--stack-cap", type=int, default=gramians.STACK_CAP)

    d = with_file("detect", "detectability and observability verdicts")
    d.add_argument("--notion", choices=["uniform", "uniform-obs", "kN", "kN-obs", "kinf", "kwft"], required=True)
    with_krange(d)
    d.add_argument("--s", type=int, default=1)
    d.add_argument("--t", type=int, default=0)
    d.add_argument("--d", type=float, default=0.5)
    d.add_argument("--b", type=float, default=0.5)
    d.add_argument("--N", type=int, default=0)
    d.add_argument("--grid", action="store_true", help="search a window grid instead of fixing one")
    d.add_argument("--s-max", type=int, default=4)
    d.add_argument("--mode", choices=["auto", "periodic", "time-invariant", "empirical"], default="auto")
    d.add_argument("--horizon", type=int, default=det.DECAY_HORIZON)
    d.add_argument("--cap", type=int, default=200)
    d.add_argument("--exhaustive", action="store_true")

    e = with_file("gle", "generalized Lyapunov equation")
    e.add_argument("--mode", choices=["backward", "limit", "periodic"], default="limit")
    e.add_argument("--k0", type=int, default=0)
    e.add_argument("--T", type=int, default=10)
    e.add_argument("--tol", type=float, default=lyapunov.GLE_TOL)
    e.add_argument("--T-max", type=int, default=lyapunov.GLE_TMAX)

    s = with_file("stability", "mean-square stability certificates and Monte Carlo")
    s.add_argument("--method", choices=["spectral", "monodromy", "empirical", "simulate"], default="spectral")
    s.add_argument("--k0", type=int, default=0)
    s.add_argument("--horizon", type=int, default=50)
    s.add_argument("--paths", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--law", choices=["rademacher", "gaussian"], default="rademacher")
    s.add_argument("--x0", help="initial state, comma separated (default all ones)")
    s.add_argument("--csv", help="also write per-step simulation statistics as CSV")

    v = with_file("verify", "check a Lyapunov-type theorem")
    v.add_argument("--theorem", choices=list(lyapunov.THEOREMS), required=True)
    v.add_argument("--N", type=int)
    v.add_argument("--eps", type=float)
    v.add_argument("--s", type=int)
    v.add_argument("--t", type=int, default=0)
    v.add_argument("--d", type=float, default=0.5)
    v.add_argument("--b", type=float, default=0.5)
    v.add_argument("--tol", type=float, default=1e-8)
    with_krange(v)
    return p


def _echo(args):
    skip = {"command", "file", "output"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    data = None
    try:
        data = Path(args.file).read_bytes()
    except OSError as exc:
        report = new_report(args.command, _echo(args), None, args.file)
        err = InputError(f"cannot read {args.file}: {exc.strerror}")
        return _finish(report, err, args)
    report = new_report(args.command, _echo(args), data, args.file)
    try:
        sys_ = parse_system(data)
        t0 = time.perf_counter()
        result = COMMANDS[args.command](sys_, args)
        report["results"].append({"analysis": args.command, "wall_time_s": time.perf_counter() - t0,
                                  "result": result})
    except StocheckError as exc:
        return _finish(report, exc, args)
    return _finish(report, None, args)


def _finish(report, err, args):
    if err is not None:
        report["status"] = "error"
        report["error"] = {"type": type(err).__name__, "message": str(err), "exit_code": err.exit_code}
        print(f"stocheck: {type(err).__name__}: {err}", file=sys.stderr)
    text = dumps(report)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if err is None else err.exit_code


if __name__ == "__main__":
    sys.exit(main())
