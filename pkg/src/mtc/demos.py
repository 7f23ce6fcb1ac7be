"""Built-in scenarios: scripted checks on the bundled example systems.

A scenario is a JSON document under ``data/scenarios``::

    {"id": ..., "description": ..., "system": "<bundled system name>",
     "seed": 7,
     "checks": [{"id": ..., "description": "... [PAPER] or [DERIVED: oracle]",
                 "op": "<operation>", "args": {...},
                 "expect": [{"path": "rank", "cmp": "eq", "value": 2}, ...]}]}

``op`` names an entry of :data:`OPERATIONS`; each returns a flat dict of
outputs and every expectation compares one output (``path``) against
``value`` with ``cmp`` in ``eq``, ``close`` (max-abs within ``tol``),
``le``, ``lt``, ``ge``, ``gt``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .control import (
    FunctionalSpec,
    descent_phi,
    extended_functional,
    minimize_functional,
    plan_transfer,
    verify_transfer,
)
from .curves import curve_from_spec, monotone_family, segment_curve
from .gramian import (
    Subspace,
    curve_gramian,
    im_gramian_space,
    largest_principal_angle,
    path_independence_check,
    reversal_check,
    w_flow_check,
)
from .propagator import Phase, PropagatorConfig, compose_check, fundamental_matrix, solve_state
from .report import dumps
from .system import MultitimeSystem, check_control, check_II4, check_II6, load_control, load_system

__all__ = [
    "ScenarioError",
    "Expectation",
    "CheckResult",
    "ScenarioReport",
    "OPERATIONS",
    "builtin_systems",
    "load_builtin_system",
    "list_scenarios",
    "load_scenario",
    "run_scenario",
    "run_scenario_document",
]

_DATA = resources.files("mtc") / "data"


class ScenarioError(ValueError):
    pass


def builtin_systems() -> list[str]:
    return sorted(p.name[:-5] for p in (_DATA / "systems").iterdir()
                  if p.name.endswith(".json") and not p.name.startswith("u_"))


def builtin_path(name: str):
    """Resource path of a bundled file (``"sys7"`` or ``"sys7.json"``), or None."""
    fname = name if name.endswith(".json") else name + ".json"
    p = _DATA / "systems" / fname
    return p if p.is_file() else None


def load_builtin_system(name: str) -> MultitimeSystem:
    p = builtin_path(name)
    if p is None:
        raise ScenarioError(f"unknown built-in system {name!r}; available: {builtin_systems()}")
    return load_system(json.loads(p.read_text()))


def _scenario_docs() -> dict[str, dict]:
    docs = {}
    for p in sorted((_DATA / "scenarios").iterdir(), key=lambda p: p.name):
        if p.name.endswith(".json"):
            doc = json.loads(p.read_text())
            if doc["id"] in docs:
                raise ScenarioError(f"duplicate scenario id {doc['id']!r}")
            docs[doc["id"]] = doc
    return docs


def list_scenarios() -> list[tuple[str, str]]:
    """``(id, one-line description)`` for every built-in scenario."""
    return [(k, d["description"]) for k, d in sorted(_scenario_docs().items())]


def load_scenario(scenario_id: str) -> dict:
    docs = _scenario_docs()
    if scenario_id not in docs:
        raise ScenarioError(f"unknown scenario {scenario_id!r}; available: {sorted(docs)}")
    return docs[scenario_id]


# --------------------------------------------------------------------------
# Operations.  Each takes (system, args, seed) and returns a dict of outputs.

def _pt(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _cfg(system, args) -> PropagatorConfig:
    return PropagatorConfig.for_system(system, **args.get("propagator", {}))


def _curve(args, seed):
    return curve_from_spec(args.get("curve"), args["from"], args["to"], seed)


def _op_check_ii4(system, args, seed):
    r = check_II4(system)
    return {"residual": r.max_abs_residual, "pass": r.passed}


def _op_check_ii6(system, args, seed):
    r = check_II6(system)
    return {"residual": r.max_abs_residual, "pass": r.passed}


def _op_check_control(system, args, seed):
    r = check_control(system, load_control(args["u"], system))
    return {"residual": r.max_abs_residual, "pass": r.passed}


def _op_gramian(system, args, seed):
    g = curve_gramian(system, _curve(args, seed), _cfg(system, args))
    return {"matrix": g.matrix, "rank": g.rank(system.tolerances.sigma_tol),
            "min_eigenvalue": g.min_eigenvalue, "symmetry_residual": g.symmetry_residual}


def _op_family_gramians(system, args, seed):
    curves = monotone_family(args["from"], args["to"], args["count"] - 1, seed, system.domain)
    cfg = _cfg(system, args)
    gs = [curve_gramian(system, c, cfg) for c in curves]
    ranks = [g.rank(system.tolerances.sigma_tol) for g in gs]
    return {"curves": len(curves), "ranks": ranks, "min_rank": min(ranks),
            "min_eigenvalue": min(g.min_eigenvalue for g in gs),
            "max_symmetry_residual": max(g.symmetry_residual for g in gs)}


def _op_w_estimate(system, args, seed):
    est = im_gramian_space(system, args["from"], args["to"], args.get("count"), seed,
                           _cfg(system, args))
    full = Subspace.full(system.n)
    return {"dimension": est.dim, "angle_to_full": largest_principal_angle(est.subspace, full)}


def _op_fundamental_matrix(system, args, seed):
    return {"matrix": fundamental_matrix(system, _curve(args, seed), _cfg(system, args))}


def _op_compose_check(system, args, seed):
    return {"residual": compose_check(system, args["r"], args["s"], args["t"], _cfg(system, args))}


def _op_w_flow_check(system, args, seed):
    return {"angle": w_flow_check(system, args["from"], args["to"], args.get("count"), seed,
                                  _cfg(system, args))}


def _op_reversal_check(system, args, seed):
    r = reversal_check(system, _curve(args, seed), _cfg(system, args))
    return {"residual": r.residual, "ranks_match": r.ranks_match}


def _op_path_independence(system, args, seed):
    curves = [curve_from_spec(spec, args["from"], args["to"], seed) for spec in args["curves"]]
    return {"residual": path_independence_check(system, curves, _cfg(system, args))}


def _op_minimize(system, args, seed):
    g = curve_gramian(system, segment_curve(args["from"], args["to"]), _cfg(system, args))
    res = minimize_functional(FunctionalSpec(g, args["x0"]), system.tolerances.sigma_tol)
    return {"status": res.status, "v0": res.v0, "value": res.value, "rank": res.rank}


def _op_transfer(system, args, seed):
    cfg = _cfg(system, args)
    plan = plan_transfer(system, args["from"], args["x0"], args["to"], args["y"], cfg)
    out = {"feasible": plan.feasible, "admissible": plan.admissible, "v": plan.v}
    if plan.feasible:
        out["error"] = verify_transfer(system, plan, _curve(args, seed), cfg)
    return out


def _op_simulate(system, args, seed):
    u = load_control(args["control"], system)
    x = solve_state(system, u, Phase(args["from"], args["x0"]), _curve(args, seed),
                    _cfg(system, args))
    return {"state": x}


def _op_extended_functional(system, args, seed):
    curve = segment_curve(args["from"], args["to"])
    a, b = args["x0"]
    values = [extended_functional(system, curve, args["x0"], descent_phi(q, a, b, args["from"]))
              for q in args["q"]]
    return {"values": values,
            "strictly_decreasing": all(y < x for x, y in zip(values, values[1:]))}


OPERATIONS = {
    "check_ii4": _op_check_ii4,
    "check_ii6": _op_check_ii6,
    "check_control": _op_check_control,
    "gramian": _op_gramian,
    "family_gramians": _op_family_gramians,
    "w_estimate": _op_w_estimate,
    "fundamental_matrix": _op_fundamental_matrix,
    "compose_check": _op_compose_check,
    "w_flow_check": _op_w_flow_check,
    "reversal_check": _op_reversal_check,
    "path_independence": _op_path_independence,
    "minimize": _op_minimize,
    "transfer": _op_transfer,
    "simulate": _op_simulate,
    "extended_functional": _op_extended_functional,
}


# --------------------------------------------------------------------------
# Expectations and reports

@dataclass
class Expectation:
    path: str
    cmp: str
    expected: object
    actual: object
    tol: float | None
    passed: bool

    def as_dict(self) -> dict:
        return {"path": self.path, "cmp": self.cmp, "expected": self.expected,
                "actual": self.actual, "tolerance": self.tol, "pass": self.passed}


def _compare(cmp: str, actual, expected, tol) -> bool:
    if actual is None:
        return expected is None and cmp == "eq"
    if cmp == "eq":
        if isinstance(actual, np.ndarray):
            return bool(np.array_equal(actual, np.asarray(expected)))
        return actual == expected
    if cmp == "close":
        a, e = np.asarray(actual, dtype=float), np.asarray(expected, dtype=float)
        return a.shape == e.shape and bool(np.max(np.abs(a - e), initial=0.0) <= tol)
    a, e = float(actual), float(expected)
    return {"le": a <= e, "lt": a < e, "ge": a >= e, "gt": a > e}[cmp]


def _evaluate(spec: dict, outputs: dict) -> Expectation:
    path, cmp = spec["path"], spec.get("cmp", "eq")
    if path not in outputs:
        raise ScenarioError(f"operation produced no output {path!r}")
    if cmp not in ("eq", "close", "le", "lt", "ge", "gt"):
        raise ScenarioError(f"unknown comparison {cmp!r}")
    tol = spec.get("tol", 0.0 if cmp == "close" else None)
    actual = outputs[path]
    return Expectation(path, cmp, spec["value"], actual, tol,
                       bool(_compare(cmp, actual, spec["value"], tol)))


@dataclass
class CheckResult:
    check_id: str
    description: str
    op: str
    expectations: list[Expectation]
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(e.passed for e in self.expectations)

    def as_dict(self) -> dict:
        return {"id": self.check_id, "description": self.description, "op": self.op,
                "pass": self.passed, "error": self.error,
                "expectations": [e.as_dict() for e in self.expectations]}


@dataclass
class ScenarioReport:
    scenario_id: str
    description: str
    system: str
    seed: int | None
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {"scenario": self.scenario_id, "description": self.description,
                "system": self.system, "seed": self.seed, "pass": self.passed,
                "checks": [c.as_dict() for c in self.checks]}

    def to_json(self) -> str:
        return dumps(self.as_dict())

    def to_text(self) -> str:
        lines = [f"scenario {self.scenario_id} (system {self.system}, seed {self.seed}): "
                 f"{'PASS' if self.passed else 'FAIL'}", f"  {self.description}"]
        for c in self.checks:
            lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.check_id}: {c.description}")
            if c.error:
                lines.append(f"      error: {c.error}")
            for e in c.expectations:
                tol = "" if e.tol is None else f" tol={_short(e.tol)}"
                lines.append(f"      {'ok ' if e.passed else 'BAD'} {e.path} {e.cmp} "
                             f"{_short(e.expected)}{tol}; actual {_short(e.actual)}")
        return "\n".join(lines)


def _short(x) -> str:
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, float):
        return format(x, ".10g") if math.isfinite(x) else str(x)
    if isinstance(x, list):
        return "[" + ", ".join(_short(v) for v in x) + "]"
    return str(x)


def run_scenario_document(doc: dict) -> ScenarioReport:
    """Run a scenario given as a parsed document."""
    system = load_builtin_system(doc["system"])
    seed = doc.get("seed")
    report = ScenarioReport(doc["id"], doc["description"], doc["system"], seed)
    for chk in doc["checks"]:
        op = OPERATIONS.get(chk["op"])
        if op is None:
            raise ScenarioError(f"unknown operation {chk['op']!r} in check {chk['id']!r}")
        try:
            outputs = op(system, chk.get("args", {}), seed)
        except (ArithmeticError, ValueError, RuntimeError) as err:
            report.checks.append(CheckResult(chk["id"], chk["description"], chk["op"], [],
                                             f"{type(err).__name__}: {err}"))
            continue
        exps = [_evaluate(spec, outputs) for spec in chk["expect"]]
        report.checks.append(CheckResult(chk["id"], chk["description"], chk["op"], exps))
    return report


def run_scenario(scenario_id: str) -> ScenarioReport:
    """Run a built-in scenario by id."""
    return run_scenario_document(load_scenario(scenario_id))
