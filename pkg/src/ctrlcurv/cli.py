"""Command-line entry point.

Exit codes: 0 PASS, 1 mathematical FAIL (regularity, verticality, invariance,
verification), 2 operational failure (I/O, parsing, numerical breakdown).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Sequence

import numpy as np

from .curvature import curvature_at, feedback_transform, random_feedback_transform
from .errors import (
    ControlGeometryError,
    DefinitionError,
    NonPositiveArgument,
    RegularityError,
    VerticalityViolated,
)
from .extremal import extremal_field, integrate_flow
from .normalform import abnormal_extension, build_chart, dump_chart, extract_a, verify_normal_form
from .output import atomic_write, csv_text
from .regularity import abnormal_locus, control_grid, regularity_scan
from .system import StatePoint, SystemModel, load_system

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class MathFailure(Exception):
    """A computation completed and its verdict is FAIL."""


def _floats(text: str, n: int, flag: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{flag} expects {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"{flag} expects {n} finite comma-separated numbers, got {text!r}")
    return vals


def _box(text: str) -> tuple[float, float, float, float]:
    b = _floats(text, 4, "--box")
    if not (b[0] <= b[1] and b[2] <= b[3]):
        raise argparse.ArgumentTypeError("--box must be 'q1min,q1max,q2min,q2max' with min <= max")
    return b


def _range(text: str) -> tuple[float, float]:
    r = _floats(text, 2, "range")
    if not r[0] <= r[1]:
        raise argparse.ArgumentTypeError("range must be 'min,max' with min <= max")
    return r


def _eps(text: str) -> int | None:
    if text == "auto":
        return None
    if text in ("+1", "1"):
        return 1
    if text == "-1":
        return -1
    raise argparse.ArgumentTypeError("--eps must be auto, +1 or -1")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("expected a positive number")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctrlcurv", description="Control curvature and microlocal normal forms of planar control systems.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--system", required=True, help="system-definition JSON file")
        sp.add_argument("--out", required=True, help=out_help)

    def grid(sp, res_default=5):
        sp.add_argument("--box", type=_box, default=(-0.5, 0.5, -0.5, 0.5), help="state box q1min,q1max,q2min,q2max (default -0.5,0.5,-0.5,0.5)")
        sp.add_argument("--urange", type=_range, default=None, help="control range min,max (default: the control domain)")
        sp.add_argument("--res", type=_positive_int, default=res_default, help=f"grid points per axis (default {res_default})")

    def point(sp, required=True):
        for name in ("--q1", "--q2", "--u"):
            sp.add_argument(name, type=float, required=required, default=None)

    def eps(sp):
        sp.add_argument("--eps", type=_eps, default=None, help="level-set sign: auto (default), +1 or -1")

    sp = sub.add_parser("check", help="scan the regularity assumptions over a grid")
    common(sp, "regularity report (JSON)")
    grid(sp)
    sp.add_argument("--tol", type=_positive_float, default=1e-9, help="scale-free zero tolerance (default 1e-9)")

    sp = sub.add_parser("curvature", help="control curvature on a grid or at a point")
    common(sp, "curvature CSV q1,q2,u,kappa,residual")
    grid(sp)
    point(sp, required=False)
    eps(sp)
    sp.add_argument("--max-violations", type=float, default=0.0, help="allowed fraction of verticality violations (default 0)")

    sp = sub.add_parser("flow", help="integrate the extremal field from a point")
    common(sp, "trajectory CSV t,q1,q2,u")
    point(sp)
    eps(sp)
    sp.add_argument("--t", type=float, default=1.0, help="final time (default 1)")
    sp.add_argument("--steps", type=_positive_int, default=None, help="fixed RK4 steps (default 1000)")
    sp.add_argument("--adaptive", action="store_true", help="adaptive step doubling with local error --tol")
    sp.add_argument("--tol", type=_positive_float, default=1e-10)

    sp = sub.add_parser("normal-form", help="build and verify the microlocal normal-form chart")
    common(sp, "output directory for grid.csv, a_samples.csv and report.json")
    point(sp)
    eps(sp)
    sp.add_argument("--box", type=_box, default=(-0.1, 0.1, -0.1, 0.1), help="chart box x1min,x1max,x2min,x2max (default +-0.1)")
    sp.add_argument("--urange", type=_range, default=(-0.5, 0.5), help="range of the new control (default -0.5,0.5)")
    sp.add_argument("--res", type=_positive_int, default=5)
    sp.add_argument("--tol", type=_positive_float, default=1e-5, help="verification tolerance (default 1e-5)")
    sp.add_argument("--base", choices=("control", "bracket"), default="control", help="base curve N0 (default control)")

    sp = sub.add_parser("invariance", help="curvature invariance under random feedback transformations")
    common(sp, "invariance report (JSON)")
    grid(sp)
    eps(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=_positive_int, default=10, help="number of random transforms (default 10)")
    sp.add_argument("--tol", type=_positive_float, default=1e-4)

    sp = sub.add_parser("abnormal", help="abnormal curvature limit or abnormal-locus detection")
    common(sp, "abnormal report (JSON)")
    sp.add_argument("--box", type=_box, default=(-0.5, 0.5, -0.5, 0.5))
    sp.add_argument("--res", type=_positive_int, default=3)
    sp.add_argument("--u", type=float, default=0.0, help="initial guess of the abnormal control for general systems")
    sp.add_argument("--delta", type=_positive_float, default=0.2, help="Richardson base distance from u=1 (default 0.2)")
    sp.add_argument("--tol", type=_positive_float, default=1e-4)
    return p


def _states(box, res: int) -> list[StatePoint]:
    return [StatePoint(float(a), float(b)) for a in np.linspace(box[0], box[1], res) for b in np.linspace(box[2], box[3], res)]


def _grid_points(system: SystemModel, args) -> list[tuple[StatePoint, float]]:
    if args.q1 is not None or args.q2 is not None or args.u is not None:
        if None in (args.q1, args.q2, args.u):
            raise ValueError("point mode needs all of --q1, --q2 and --u")
        return [(StatePoint(args.q1, args.q2), args.u)]
    us = control_grid(system, args.urange, args.res)
    return [(q, float(u)) for q in _states(args.box, args.res) for u in us]


def cmd_check(args) -> int:
    system = load_system(args.system)
    report = regularity_scan(system, args.box, args.urange, args.res, args.tol)
    atomic_write(args.out, report.to_json() + "\n")
    print(f"regularity {report.status}: min|det(f_u,f_uu)|={report.strong_convexity_min:.6g}, "
          f"min|det(f,f_u)|={report.transversality_min:.6g}, eps={report.epsilon}")
    for note in report.notes:
        print(note, file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_curvature(args) -> int:
    system = load_system(args.system)
    points = _grid_points(system, args)
    if len(points) > 1:
        report = regularity_scan(system, args.box, args.urange, args.res)
        if not report.passed:
            raise MathFailure("regularity fails on the grid: " + "; ".join(report.notes))
    rows, violations = [], 0
    for q, u in points:
        try:
            s = curvature_at(system, q, u, args.eps)
        except VerticalityViolated as exc:
            violations += 1
            print(f"verticality violated: {exc}", file=sys.stderr)
            s = curvature_at(system, q, u, args.eps, check=False)
        rows.append((q.q1, q.q2, u, s.kappa, s.verticality_residual))
    atomic_write(args.out, csv_text(("q1", "q2", "u", "kappa", "residual"), rows))
    kap = [r[3] for r in rows]
    print(f"{len(rows)} samples, kappa in [{min(kap):.17g}, {max(kap):.17g}], verticality violations {violations}")
    if violations > args.max_violations * len(rows):
        return EXIT_FAIL
    return EXIT_PASS


def cmd_flow(args) -> int:
    system = load_system(args.system)
    field = extremal_field(system, args.eps)
    traj = integrate_flow(field, (args.q1, args.q2, args.u), args.t, steps=args.steps, adaptive=args.adaptive, tol=args.tol)
    traj.write_csv(args.out)
    end = traj.end
    print(f"endpoint q=({end[0]:.17g}, {end[1]:.17g}), u={end[2]:.17g} after {len(traj.t) - 1} steps")
    return EXIT_PASS


def cmd_normal_form(args) -> int:
    system = load_system(args.system)
    b = args.box
    chart = build_chart(system, (args.q1, args.q2), args.u, args.eps, (b[0], b[1]), (b[2], b[3]), args.urange, args.res, base=args.base)
    try:
        extract_a(chart)
    except NonPositiveArgument as exc:
        raise MathFailure(str(exc)) from exc
    report = verify_normal_form(chart, args.tol)
    dump_chart(chart, report, args.out)
    print(f"normal form {report.status}: eps={report.epsilon}, a(0,0,0)={report.a_origin:.17g}")
    for k, v in report.residuals.items():
        print(f"  {k} residual {v:.3e}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_invariance(args) -> int:
    system = load_system(args.system)
    us = control_grid(system, args.urange, args.res)
    urange = (float(us[0]), float(us[-1]))
    states = _states(args.box, args.res)
    base = {(q, float(u)): curvature_at(system, q, float(u), args.eps).kappa for q in states for u in us}
    rng = np.random.default_rng(args.seed)
    per_transform = []
    for k in range(args.n):
        T = random_feedback_transform(rng, args.box, urange)
        g = feedback_transform(system, T)
        dev = 0.0
        for (q, u), kappa in base.items():
            x = T.phi((q.q1, q.q2))
            w = T.psi_value((q.q1, q.q2), u)
            kt = curvature_at(g, StatePoint(float(x[0]), float(x[1])), w, args.eps).kappa
            dev = max(dev, abs(kt - kappa))
        per_transform.append({"index": k, "phi1": T.phi1, "phi2": T.phi2, "psi": T.psi, "max_deviation": dev})
    worst = max(t["max_deviation"] for t in per_transform)
    passed = worst < args.tol
    report = {
        "status": "PASS" if passed else "FAIL",
        "max_deviation": worst,
        "tolerance": args.tol,
        "seed": args.seed,
        "grid": {"box": list(args.box), "urange": list(urange), "resolution": args.res},
        "transforms": per_transform,
    }
    atomic_write(args.out, json.dumps(report, indent=2) + "\n")
    print(f"invariance {report['status']}: max deviation {worst:.3e} over {args.n} transforms")
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_abnormal(args) -> int:
    system = load_system(args.system)
    states = _states(args.box, args.res)
    if system.params.get("family") == "abnormal_form":
        rows = []
        for q in states:
            ext = abnormal_extension(system, q, args.delta, tol=args.tol)
            rows.append({
                "q1": q.q1,
                "q2": q.q2,
                "kappa_limit": ext.kappa_limit,
                "series_value": ext.series_value,
                "difference": abs(ext.kappa_limit - ext.series_value),
                "extrapolation_error": ext.extrapolation_error,
            })
        worst = max(r["difference"] for r in rows)
        passed = worst < args.tol
        report = {"kind": "abnormal_form", "status": "PASS" if passed else "FAIL", "max_difference": worst, "tolerance": args.tol, "samples": rows}
        print(f"abnormal extension {report['status']}: max |limit - series| = {worst:.3e}")
    else:
        locus = abnormal_locus(system, states, args.u)
        samples = [{"q1": q.q1, "q2": q.q2, "u_ab": u, "residual": r} for (q, u), r in zip(locus.samples, locus.residuals)]
        passed = True
        report = {"kind": "locus", "status": "PASS", "found": bool(samples), "samples": samples}
        if samples:
            print(f"abnormal locus found at {len(samples)} of {len(states)} states")
        else:
            report["message"] = "no abnormal locus"
            print("no abnormal locus")
    atomic_write(args.out, json.dumps(report, indent=2) + "\n")
    return EXIT_PASS if passed else EXIT_FAIL


COMMANDS = {
    "check": cmd_check,
    "curvature": cmd_curvature,
    "flow": cmd_flow,
    "normal-form": cmd_normal_form,
    "invariance": cmd_invariance,
    "abnormal": cmd_abnormal,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_PASS
    try:
        return COMMANDS[args.command](args)
    except (MathFailure, RegularityError, VerticalityViolated) as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except DefinitionError as exc:
        print(f"error: invalid system definition: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ControlGeometryError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
