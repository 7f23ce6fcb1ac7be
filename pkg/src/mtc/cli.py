"""Command-line front end.

Exit codes: 0 success, 1 analytic failure (a check fails or a transfer is
infeasible), 2 usage or input error.  Reports are JSON on stdout (or text
for ``check`` and ``demo`` unless ``--json``), with floats written to 17
significant digits.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .control import plan_transfer, verify_transfer
from .curves import CurveError, curve_from_spec
from .demos import ScenarioError, builtin_path, list_scenarios, run_scenario
from .expressions import ExpressionError
from .gramian import (
    curve_gramian,
    im_gramian_space,
    matrix_to_csv,
    path_independence_check,
    reversal_check,
)
from .propagator import Phase, PropagationError, PropagatorConfig, solve_state
from .report import dumps
from .system import (
    MultitimeSystem,
    SystemDefinitionError,
    check_control,
    check_II4,
    check_II6,
    load_control,
    load_system,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PATH_TOL = 1e-8  # gramian agreement that counts as path independent


class UsageError(Exception):
    pass


def parse_point(text: str) -> np.ndarray:
    """``"0,1.5"`` -> ``array([0., 1.5])``."""
    try:
        return np.array([float(x) for x in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def _read_json(path: str):
    p = Path(path)
    if not p.is_file():
        bundled = builtin_path(path)
        if bundled is None:
            raise UsageError(f"no such file: {path}")
        return json.loads(bundled.read_text())
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise UsageError(f"{path}: invalid JSON: {err}") from None


def _load(args) -> MultitimeSystem:
    system = load_system(_read_json(args.system))
    tol = system.tolerances.updated(residual=args.residual, sigma_tol=args.sigma_tol,
                                    membership=args.membership, grid_points=args.grid_points,
                                    family_size=getattr(args, "curves", None),
                                    seed=getattr(args, "seed", None))
    return dataclasses.replace(system, tolerances=tol)


def _cfg(system, args) -> PropagatorConfig:
    return PropagatorConfig.for_system(system, steps_per_segment=args.steps, panels=args.panels,
                                       gl_order=args.gl_order)


def _check_dim(system, name, point):
    if point.shape != (system.m,):
        raise UsageError(f"{name} needs {system.m} components, got {point.shape[0]}")


def _curve(args, t0, t):
    spec = {"type": args.curve, "reverse": args.reverse}
    if args.weights is not None:
        spec["weights"] = list(args.weights)
    if args.powers is not None:
        spec["powers"] = list(args.powers)
    if args.order:
        spec["order"] = list(args.order)
    return curve_from_spec(spec, t0, t, args.curve_seed)


def _emit(text: str, out: str | None = None):
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _path_probe(system, cfg) -> str:
    """Compare gramians of three curves across the probe box after a literal II6 failure."""
    lo, hi = system.probe_bounds()
    curves = [curve_from_spec(spec, lo, hi, 0) for spec in
              ("segment", "staircase", {"type": "monotone", "weights": [0.5] * system.m,
                                        "powers": [2.0] * system.m})]
    spread = path_independence_check(system, curves, cfg)
    if spread < PATH_TOL:
        return (f"discrepancy: gramians on three probe curves agree to {spread:.1e} "
                "although the literal II6 residual is nonzero")
    return f"gramians on three probe curves differ by {spread:.3e}, consistent with the failure"


# --------------------------------------------------------------------------
# Commands

def cmd_check(args) -> int:
    system = _load(args)
    wanted_ii4 = args.ii4 or not (args.ii6 or args.control)
    wanted_ii6 = args.ii6 or not (args.ii4 or args.control)
    reports = []
    if wanted_ii4:
        reports.append(check_II4(system, ordered_pairs=args.ordered_pairs))
    if wanted_ii6:
        ii6 = check_II6(system, ordered_pairs=args.ordered_pairs)
        if not ii6.passed:
            ii6.note = _path_probe(system, _cfg(system, args))
        reports.append(ii6)
    if args.control:
        u = load_control(_read_json(args.control), system)
        reports.append(check_control(system, u, ordered_pairs=args.ordered_pairs))
    passed = all(r.passed for r in reports)
    if args.json:
        _emit(dumps({"system": system.name, "pass": passed,
                     "checks": [r.as_dict() for r in reports]}), args.out)
    else:
        _emit("\n".join(str(r) for r in reports), args.out)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_gramian(args) -> int:
    system = _load(args)
    _check_dim(system, "--from", args.t0)
    _check_dim(system, "--to", args.t)
    cfg = _cfg(system, args)
    curve = _curve(args, args.t0, args.t)
    g = curve_gramian(system, curve, cfg)
    doc = g.as_dict(system.tolerances.sigma_tol)
    rev = reversal_check(system, curve, cfg, system.tolerances.sigma_tol)
    doc["reversal"] = {"residual": rev.residual, "rank_forward": rev.rank_forward,
                       "rank_reverse": rev.rank_reverse, "ranks_match": rev.ranks_match}
    if args.csv:
        Path(args.csv).write_text(matrix_to_csv(g.matrix))
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_w(args) -> int:
    system = _load(args)
    _check_dim(system, "--from", args.t0)
    _check_dim(system, "--to", args.t)
    est = im_gramian_space(system, args.t0, args.t, cfg=_cfg(system, args))
    _emit(dumps(est.as_dict()), args.out)
    return EXIT_OK


def cmd_transfer(args) -> int:
    system = _load(args)
    for name, p in (("--from", args.t0), ("--to", args.t)):
        _check_dim(system, name, p)
    for name, p in (("--x0", args.x0), ("--y", args.y)):
        if p.shape != (system.n,):
            raise UsageError(f"{name} needs {system.n} components, got {p.shape[0]}")
    cfg = _cfg(system, args)
    plan = plan_transfer(system, args.t0, args.x0, args.t, args.y, cfg)
    err = None
    if plan.feasible:
        err = verify_transfer(system, plan, _curve(args, args.t0, args.t), cfg)
    _emit(dumps(plan.as_dict(err)), args.out)
    return EXIT_OK if plan.feasible else EXIT_FAIL


def cmd_simulate(args) -> int:
    system = _load(args)
    _check_dim(system, "--from", args.t0)
    _check_dim(system, "--to", args.t)
    if args.x0.shape != (system.n,):
        raise UsageError(f"--x0 needs {system.n} components")
    if args.control:
        u = load_control(_read_json(args.control), system)
    else:
        u = load_control([["0"] * system.k for _ in range(system.m)], system)
    curve = _curve(args, args.t0, args.t)
    x = solve_state(system, u, Phase(args.t0, args.x0), curve, _cfg(system, args))
    _emit(dumps({"t0": args.t0, "x0": args.x0, "t": args.t, "curve_id": curve.curve_id,
                 "state": x}), args.out)
    return EXIT_OK


def cmd_demo(args) -> int:
    if args.list or not args.id:
        entries = list_scenarios()
        if args.json:
            _emit(dumps([{"id": i, "description": d} for i, d in entries]), args.out)
        else:
            _emit("\n".join(f"{i}: {d}" for i, d in entries), args.out)
        return EXIT_OK
    report = run_scenario(args.id)
    _emit(report.to_json() if args.json else report.to_text(), args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# Parser

def _tolerance_flags(p):
    g = p.add_argument_group("tolerances (defaults from the system file, else built-in)")
    g.add_argument("--residual", type=float, help="pass threshold for residual checks")
    g.add_argument("--sigma-tol", type=float, help="relative eigenvalue cutoff for ranks")
    g.add_argument("--membership", type=float, help="subspace membership tolerance")
    g.add_argument("--grid-points", type=int, help="probe grid points per axis")
    g.add_argument("--steps", type=int, help="RK4 steps per curve piece")
    g.add_argument("--panels", type=int, help="Gauss-Legendre panels per curve piece")
    g.add_argument("--gl-order", type=int, help="Gauss-Legendre nodes per panel")


def _curve_flags(p):
    g = p.add_argument_group("curve")
    g.add_argument("--curve", choices=["segment", "monotone", "staircase"], default="segment")
    g.add_argument("--weights", type=parse_point, help="monotone profile weights, e.g. 0.5,1")
    g.add_argument("--powers", type=parse_point, help="monotone profile powers, e.g. 2,0.5")
    g.add_argument("--order", type=lambda s: [int(x) for x in s.split(",")],
                   help="staircase axis order (1-based), e.g. 2,1")
    g.add_argument("--curve-seed", type=int, default=0, help="seed for a random monotone profile")
    g.add_argument("--reverse", action="store_true", help="traverse the curve backwards")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtc", description="Multitime controllability toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, help="cap worker threads (sets MTC_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, system=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        if system:
            p.add_argument("system", help="system JSON file (or a bundled name such as sys7)")
        p.add_argument("--out", help="also write the report to this file")
        p.set_defaults(func=func)
        return p

    p = command("check", cmd_check, "integrability residual checks")
    p.add_argument("--ii4", action="store_true", help="check the M integrability condition")
    p.add_argument("--ii6", action="store_true", help="check the gramian path-independence condition")
    p.add_argument("--control", metavar="FILE", help="check a candidate control (JSON)")
    p.add_argument("--ordered-pairs", action="store_true", help="report every ordered (alpha, beta)")
    p.add_argument("--json", action="store_true", help="JSON instead of text")
    _tolerance_flags(p)

    p = command("gramian", cmd_gramian, "gramian of one curve, with the reversal check")
    p.add_argument("--from", dest="t0", type=parse_point, required=True)
    p.add_argument("--to", dest="t", type=parse_point, required=True)
    p.add_argument("--csv", help="write the matrix as CSV")
    _curve_flags(p)
    _tolerance_flags(p)

    p = command("w", cmd_w, "Im-gramian space estimate over a seeded monotone family")
    p.add_argument("--from", dest="t0", type=parse_point, required=True)
    p.add_argument("--to", dest="t", type=parse_point, required=True)
    p.add_argument("--curves", type=int, help="random curves in the family (plus the segment)")
    p.add_argument("--seed", type=int)
    _tolerance_flags(p)

    p = command("transfer", cmd_transfer, "gramian control between two phases")
    p.add_argument("--from", dest="t0", type=parse_point, required=True)
    p.add_argument("--x0", type=parse_point, required=True)
    p.add_argument("--to", dest="t", type=parse_point, required=True)
    p.add_argument("--y", type=parse_point, required=True)
    _curve_flags(p)
    _tolerance_flags(p)

    p = command("simulate", cmd_simulate, "integrate the state along a curve")
    p.add_argument("--from", dest="t0", type=parse_point, required=True)
    p.add_argument("--x0", type=parse_point, required=True)
    p.add_argument("--to", dest="t", type=parse_point, required=True)
    p.add_argument("--control", metavar="FILE", help="control JSON (default: zero)")
    _curve_flags(p)
    _tolerance_flags(p)

    p = command("demo", cmd_demo, "run a built-in scenario", system=False)
    p.add_argument("id", nargs="?", help="scenario id")
    p.add_argument("--list", action="store_true", help="list scenarios")
    p.add_argument("--json", action="store_true", help="JSON instead of text")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.threads is not None:
        os.environ["MTC_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except (UsageError, SystemDefinitionError, ExpressionError, CurveError, ScenarioError,
            PropagationError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
