"""Multitime linear systems ``dx/dt^a = M_a(t) x + N_a(t) u_a(t)`` and the
sampled residual checks of their integrability conditions.

All three checks (``check_II4``, ``check_II6``, ``check_control``) evaluate the
literal left-minus-right expressions at every point of a finite grid, using
symbolic derivatives of the coefficient expressions.  Points where some entry
is undefined are skipped and listed in the report.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import jsonschema
import numpy as np

from .defaults import DEFAULT_TOLERANCES, Tolerances
from .expressions import (
    ExpressionError,
    MatrixExpr,
    diff_matrix,
    eval_matrix_array,
    matrix_from_rows,
    zero_matrix,
)

__all__ = [
    "SystemDefinitionError",
    "DomainSpec",
    "MultitimeSystem",
    "ResidualReport",
    "load_system",
    "system_to_document",
    "probe_grid",
    "check_II4",
    "check_II6",
    "check_control",
    "load_control",
    "SYSTEM_SCHEMA",
]


class SystemDefinitionError(ValueError):
    """Schema, dimension or parse error in a system document."""


_BOUND = {"anyOf": [{"type": "number"}, {"type": "null"}, {"enum": ["inf", "-inf", "+inf"]}]}
_CELL = {"anyOf": [{"type": "string"}, {"type": "number"}]}
_MATRIX = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": _CELL}}

SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["m", "n", "k", "N"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "m": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1},
        "domain": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["box", "product-halfspace"]},
                "lower": {"type": "array", "items": _BOUND},
                "upper": {"type": "array", "items": _BOUND},
                "open": {"type": "array", "items": {"type": "boolean"}},
            },
            "additionalProperties": False,
        },
        "M": {"type": "array", "items": _MATRIX},
        "N": {"type": "array", "items": _MATRIX},
        "probe_box": {
            "type": "object",
            "required": ["lower", "upper"],
            "properties": {
                "lower": {"type": "array", "items": {"type": "number"}},
                "upper": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "propagator": {"type": "object"},
        "tolerances": {"type": "object"},
    },
}


def _bound(x, default: float) -> float:
    if x is None:
        return default
    if isinstance(x, str):
        return float(x)
    return float(x)


@dataclass(frozen=True)
class DomainSpec:
    """Product of per-axis intervals; open bounds by default."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    open: tuple[bool, ...] | None = None
    kind: str = "box"

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise SystemDefinitionError("domain bounds differ in length")
        if self.open is None:
            object.__setattr__(self, "open", (True,) * len(self.lower))
        if len(self.open) != len(self.lower):
            raise SystemDefinitionError("domain open flags differ in length")
        for lo, hi in zip(self.lower, self.upper):
            if not lo < hi:
                raise SystemDefinitionError(f"empty domain axis [{lo}, {hi}]")

    @classmethod
    def whole(cls, m: int) -> "DomainSpec":
        return cls((-math.inf,) * m, (math.inf,) * m)

    @property
    def m(self) -> int:
        return len(self.lower)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        op = np.asarray(self.open)
        above = np.where(op, pts > lo, pts >= lo)
        below = np.where(op, pts < hi, pts <= hi)
        return np.all(above & below, axis=1)

    def default_probe_box(self, inset: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
        lo = np.zeros(self.m)
        hi = np.ones(self.m)
        for a in range(self.m):
            dlo = self.lower[a] + (inset if self.open[a] else 0.0)
            dhi = self.upper[a] - (inset if self.open[a] else 0.0)
            lo[a] = max(lo[a], dlo)
            hi[a] = min(hi[a], dhi)
        if np.any(lo > hi):
            raise SystemDefinitionError(
                "domain does not meet [0,1]^m; declare an explicit probe_box")
        return lo, hi

    def __str__(self) -> str:
        parts = []
        for lo, hi, op in zip(self.lower, self.upper, self.open):
            left = "(" if op or lo == -math.inf else "["
            right = ")" if op or hi == math.inf else "]"
            parts.append(f"{left}{lo:g}, {hi:g}{right}")
        return " x ".join(parts)


@dataclass(frozen=True, eq=False)
class MultitimeSystem:
    m: int
    n: int
    k: int
    M: tuple[MatrixExpr, ...]
    N: tuple[MatrixExpr, ...]
    domain: DomainSpec
    name: str = "system"
    probe_box: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    propagator: dict = field(default_factory=dict)
    tolerances: Tolerances = DEFAULT_TOLERANCES

    def __post_init__(self):
        if len(self.M) != self.m or len(self.N) != self.m:
            raise SystemDefinitionError(
                f"expected {self.m} M and N matrices, got {len(self.M)} and {len(self.N)}")
        for a, (Ma, Na) in enumerate(zip(self.M, self.N), start=1):
            if Ma.shape != (self.n, self.n):
                raise SystemDefinitionError(f"M[{a}] has shape {Ma.shape}, expected {(self.n, self.n)}")
            if Na.shape != (self.n, self.k):
                raise SystemDefinitionError(f"N[{a}] has shape {Na.shape}, expected {(self.n, self.k)}")
            for e in Ma.entries + Na.entries:
                if any(v > self.m for v in e.variables()):
                    raise SystemDefinitionError(f"entry {e} uses a variable beyond t{self.m}")
        if self.domain.m != self.m:
            raise SystemDefinitionError("domain dimension differs from m")

    @functools.cached_property
    def dM(self) -> tuple[tuple[MatrixExpr, ...], ...]:
        """``dM[a][b]`` is the derivative of ``M_(a+1)`` along ``t^(b+1)``."""
        return tuple(tuple(diff_matrix(Ma, b + 1) for b in range(self.m)) for Ma in self.M)

    @functools.cached_property
    def dN(self) -> tuple[tuple[MatrixExpr, ...], ...]:
        return tuple(tuple(diff_matrix(Na, b + 1) for b in range(self.m)) for Na in self.N)

    @property
    def M_is_zero(self) -> bool:
        return all(Ma.is_zero() for Ma in self.M)

    def eval_M(self, points, strict: bool = True) -> np.ndarray:
        """Shape ``(m, P, n, n)``."""
        return np.stack([eval_matrix_array(Ma, points, strict) for Ma in self.M])

    def eval_N(self, points, strict: bool = True) -> np.ndarray:
        """Shape ``(m, P, n, k)``."""
        return np.stack([eval_matrix_array(Na, points, strict) for Na in self.N])

    def generator(self, points, velocities) -> np.ndarray:
        """``sum_a M_a(p) v^a`` for each row; shape ``(P, n, n)``."""
        pts = np.atleast_2d(points)
        vel = np.atleast_2d(velocities)
        out = np.zeros((pts.shape[0], self.n, self.n))
        if self.M_is_zero:
            return out
        for a, Ma in enumerate(self.M):
            if Ma.is_zero():
                continue
            out += eval_matrix_array(Ma, pts) * vel[:, a, None, None]
        return out

    def probe_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.probe_box is not None:
            return np.asarray(self.probe_box[0], float), np.asarray(self.probe_box[1], float)
        return self.domain.default_probe_box(self.tolerances.probe_inset)


def probe_grid(system: MultitimeSystem, points_per_axis: int | None = None) -> np.ndarray:
    """Lattice of ``points_per_axis**m`` points over the system's probe box."""
    npts = points_per_axis or system.tolerances.grid_points
    lo, hi = system.probe_bounds()
    axes = [np.linspace(l, h, npts) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


# --------------------------------------------------------------------------
# Loading

def _matrices(doc, key: str, m: int, rows: int, cols: int) -> tuple[MatrixExpr, ...]:
    if key not in doc:
        if key == "M":
            return tuple(zero_matrix(rows, cols) for _ in range(m))
        raise SystemDefinitionError(f"missing {key}")
    mats = doc[key]
    if len(mats) != m:
        raise SystemDefinitionError(f"{key} has {len(mats)} matrices, expected m={m}")
    out = []
    for a, mat in enumerate(mats, start=1):
        shape = (len(mat), len(mat[0]) if mat else 0)
        if any(len(r) != shape[1] for r in mat) or shape != (rows, cols):
            raise SystemDefinitionError(
                f"dimension mismatch: {key}[{a}] has shape {shape}, expected {(rows, cols)}")
        for i, row in enumerate(mat):
            for j, cell in enumerate(row):
                try:
                    matrix_from_rows([[cell]], m)
                except ExpressionError as err:
                    raise SystemDefinitionError(f"{key}[{a}][{i}][{j}]: {err}") from err
        out.append(matrix_from_rows(mat, m))
    return tuple(out)


def load_system(document: dict, check_sample: bool = True) -> MultitimeSystem:
    """Build a :class:`MultitimeSystem` from a parsed system document.

    With ``check_sample`` every coefficient entry is evaluated on the probe
    grid and a :class:`SystemDefinitionError` names the first undefined one.
    """
    try:
        jsonschema.validate(document, SYSTEM_SCHEMA)
    except jsonschema.ValidationError as err:
        loc = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SystemDefinitionError(f"schema violation at {loc}: {err.message}") from None
    m, n, k = document["m"], document["n"], document["k"]
    dom = document.get("domain", {})
    lower = dom.get("lower", [None] * m)
    upper = dom.get("upper", [None] * m)
    if len(lower) != m or len(upper) != m:
        raise SystemDefinitionError(f"domain bounds must have m={m} entries")
    domain = DomainSpec(
        tuple(_bound(x, -math.inf) for x in lower),
        tuple(_bound(x, math.inf) for x in upper),
        tuple(dom["open"]) if "open" in dom else None,
        dom.get("kind", "box"),
    )
    probe = None
    if "probe_box" in document:
        pb = document["probe_box"]
        if len(pb["lower"]) != m or len(pb["upper"]) != m:
            raise SystemDefinitionError(f"probe_box bounds must have m={m} entries")
        probe = (tuple(float(x) for x in pb["lower"]), tuple(float(x) for x in pb["upper"]))
        if not np.all(domain.contains(np.array([probe[0], probe[1]]))):
            raise SystemDefinitionError("probe_box corners must lie inside the domain")
    try:
        tolerances = DEFAULT_TOLERANCES.updated(**document.get("tolerances", {}))
    except (TypeError, ValueError) as err:
        raise SystemDefinitionError(str(err)) from None
    system = MultitimeSystem(
        m=m, n=n, k=k,
        M=_matrices(document, "M", m, n, n),
        N=_matrices(document, "N", m, n, k),
        domain=domain,
        name=document.get("name", "system"),
        probe_box=probe,
        propagator=dict(document.get("propagator", {})),
        tolerances=tolerances,
    )
    if check_sample:
        grid = probe_grid(system, min(system.tolerances.grid_points, 5))
        for key, mats in (("M", system.M), ("N", system.N)):
            for a, mat in enumerate(mats, start=1):
                try:
                    eval_matrix_array(mat, grid)
                except ExpressionError as err:
                    raise SystemDefinitionError(f"{key}[{a}] not evaluable on the probe box: {err}") from None
    return system


def system_to_document(system: MultitimeSystem) -> dict:
    def bound(x):
        return None if math.isinf(x) else x

    doc = {
        "name": system.name,
        "m": system.m, "n": system.n, "k": system.k,
        "domain": {"kind": system.domain.kind,
                   "lower": [bound(x) for x in system.domain.lower],
                   "upper": [bound(x) for x in system.domain.upper],
                   "open": list(system.domain.open)},
        "M": [Ma.to_rows() for Ma in system.M],
        "N": [Na.to_rows() for Na in system.N],
    }
    if system.probe_box is not None:
        doc["probe_box"] = {"lower": list(system.probe_box[0]), "upper": list(system.probe_box[1])}
    return doc


def load_control(document, system: MultitimeSystem) -> tuple[MatrixExpr, ...]:
    """Parse a candidate control: ``{"u": [[e1, ..., ek], ...]}`` with one row
    of k expressions per axis (a bare list is accepted too)."""
    rows = document.get("u") if isinstance(document, dict) else document
    if not isinstance(rows, list) or len(rows) != system.m:
        raise SystemDefinitionError(f"control must list m={system.m} vectors")
    out = []
    for a, vec in enumerate(rows, start=1):
        if not isinstance(vec, list) or len(vec) != system.k:
            raise SystemDefinitionError(f"u[{a}] must have k={system.k} entries")
        try:
            out.append(matrix_from_rows([[x] for x in vec], system.m))
        except ExpressionError as err:
            raise SystemDefinitionError(f"u[{a}]: {err}") from None
    return tuple(out)


# --------------------------------------------------------------------------
# Residual checks

@dataclass
class ResidualReport:
    name: str
    max_abs_residual: float
    argmax_point: tuple[float, ...] | None
    argmax_indices: tuple[int, int] | None
    samples: int
    threshold: float
    skipped: list[tuple[float, ...]] = field(default_factory=list)
    note: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_abs_residual <= self.threshold)

    def as_dict(self) -> dict:
        return {
            "check": self.name,
            "max_abs_residual": self.max_abs_residual,
            "argmax_point": None if self.argmax_point is None else list(self.argmax_point),
            "argmax_indices": None if self.argmax_indices is None else list(self.argmax_indices),
            "samples": self.samples,
            "skipped_points": [list(p) for p in self.skipped],
            "threshold": self.threshold,
            "pass": self.passed,
            "note": self.note,
        }

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        where = ""
        if self.argmax_point is not None:
            where = f" at t={self.argmax_point} (alpha,beta)={self.argmax_indices}"
        skipped = f", {len(self.skipped)} point(s) skipped" if self.skipped else ""
        text = (f"{self.name}: {verdict} max|residual|={self.max_abs_residual:.3e} "
                f"<= {self.threshold:g}?{where} [{self.samples} samples{skipped}]")
        return f"{text}\n  note: {self.note}" if self.note else text


def _pairs(m: int, ordered: bool):
    if ordered:
        return [(a, b) for a in range(m) for b in range(m) if a != b]
    return list(itertools.combinations(range(m), 2))


def _collect(name: str, grid: np.ndarray, residuals: dict, valid: np.ndarray,
             threshold: float) -> ResidualReport:
    best, best_pt, best_pair = -1.0, None, None
    for (a, b), r in residuals.items():
        mags = np.max(np.abs(r).reshape(r.shape[0], -1), axis=1) if r.size else np.zeros(len(grid))
        mags = np.where(valid, mags, -np.inf)
        i = int(np.argmax(mags))
        if mags[i] > best:
            best, best_pt, best_pair = float(mags[i]), tuple(float(x) for x in grid[i]), (a + 1, b + 1)
    skipped = [tuple(float(x) for x in p) for p in grid[~valid]]
    if not residuals:
        best = 0.0
    elif not valid.any():
        best = math.nan
    return ResidualReport(name, best, best_pt, best_pair, int(valid.sum()), threshold, skipped)


def _prepare_grid(system: MultitimeSystem, grid) -> np.ndarray:
    if grid is None:
        return probe_grid(system)
    g = np.atleast_2d(np.asarray(grid, dtype=float))
    if g.shape[1] != system.m:
        raise ValueError(f"grid points must have m={system.m} components")
    return g


def _finite_rows(*arrays) -> np.ndarray:
    ok = None
    for arr in arrays:
        # arr has shape (..., P, r, c) with the point axis third from the end
        f = np.isfinite(arr).reshape(-1, *arr.shape[-3:]).all(axis=(0, 2, 3))
        ok = f if ok is None else ok & f
    return ok


def check_II4(system: MultitimeSystem, grid=None, threshold: float | None = None,
              ordered_pairs: bool = False) -> ResidualReport:
    """``max |dM_a/dt^b + M_a M_b - dM_b/dt^a - M_b M_a|`` over the grid."""
    g = _prepare_grid(system, grid)
    thr = system.tolerances.residual if threshold is None else threshold
    M = system.eval_M(g, strict=False)
    dM = np.stack([[eval_matrix_array(system.dM[a][b], g, strict=False)
                    for b in range(system.m)] for a in range(system.m)])
    valid = _finite_rows(M, dM)
    res = {}
    for a, b in _pairs(system.m, ordered_pairs):
        res[(a, b)] = dM[a, b] + M[a] @ M[b] - dM[b, a] - M[b] @ M[a]
    return _collect("II4", g, res, valid, thr)


def check_II6(system: MultitimeSystem, grid=None, threshold: float | None = None,
              ordered_pairs: bool = False) -> ResidualReport:
    """Literal left-minus-right of the gramian path-independence relation::

        M_a N_b N_b^T + dN_a/dt^b N_a^T + N_a dN_a^T/dt^b + N_b N_b^T M_a^T
      - (same with a and b exchanged)
    """
    g = _prepare_grid(system, grid)
    thr = system.tolerances.residual if threshold is None else threshold
    M = system.eval_M(g, strict=False)
    N = system.eval_N(g, strict=False)
    dN = np.stack([[eval_matrix_array(system.dN[a][b], g, strict=False)
                    for b in range(system.m)] for a in range(system.m)])
    valid = _finite_rows(M, N, dN)
    NT = np.swapaxes(N, -1, -2)
    MT = np.swapaxes(M, -1, -2)
    dNT = np.swapaxes(dN, -1, -2)

    def side(a, b):
        return (M[a] @ N[b] @ NT[b] + dN[a, b] @ NT[a] + N[a] @ dNT[a, b]
                + N[b] @ NT[b] @ MT[a])

    res = {(a, b): side(a, b) - side(b, a) for a, b in _pairs(system.m, ordered_pairs)}
    return _collect("II6", g, res, valid, thr)


def check_control(system: MultitimeSystem, u: Sequence[MatrixExpr], grid=None,
                  threshold: float | None = None, ordered_pairs: bool = False) -> ResidualReport:
    """Residual of the control compatibility relation for a candidate ``u``::

        M_a N_b u_b + dN_a/dt^b u_a + N_a du_a/dt^b - (a <-> b)
    """
    if len(u) != system.m or any(ua.shape != (system.k, 1) for ua in u):
        raise SystemDefinitionError(f"control must be m={system.m} vectors of length k={system.k}")
    g = _prepare_grid(system, grid)
    thr = system.tolerances.residual if threshold is None else threshold
    M = system.eval_M(g, strict=False)
    N = system.eval_N(g, strict=False)
    dN = np.stack([[eval_matrix_array(system.dN[a][b], g, strict=False)
                    for b in range(system.m)] for a in range(system.m)])
    U = np.stack([eval_matrix_array(ua, g, strict=False) for ua in u])
    dU = np.stack([[eval_matrix_array(diff_matrix(ua, b + 1), g, strict=False)
                    for b in range(system.m)] for ua in u])
    valid = _finite_rows(M, N, dN, U, dU)

    def side(a, b):
        return M[a] @ N[b] @ U[b] + dN[a, b] @ U[a] + N[a] @ dU[a, b]

    res = {(a, b): side(a, b) - side(b, a) for a, b in _pairs(system.m, ordered_pairs)}
    return _collect("II5", g, res, valid, thr)
