"""Controllability functionals, their minimization, and gramian controls.

The finite-dimensional functional is the quadratic affine form

    F(v) = <C v, v> - 2 <x0, v>

with ``C`` a (curve) gramian.  It has a minimizer iff ``x0`` lies in the image
of ``C``; minimizers are exactly the solutions of ``C v = x0``.  A minimizer
``v`` yields the control ``u_a(s) = N_a(s)^T chi(t0,s)^T v`` whose curvilinear
integral ``integral chi(t0,s) N_a u_a ds^a`` equals ``C v``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .curves import PiecewiseCurve, segment_curve
from .defaults import DEFAULT_TOLERANCES
from .expressions import Expression, eval_array, parse_expr
from .gramian import GramianResult, gramian_from_propagation
from .propagator import Phase, Propagation, PropagatorConfig, propagate, solve_state
from .system import MultitimeSystem, check_II4, check_II6

__all__ = [
    "FunctionalSpec",
    "MinResult",
    "GramianControl",
    "TransferPlan",
    "functional_value",
    "functional_value_dual",
    "minimize_functional",
    "synthesize_control",
    "plan_transfer",
    "verify_transfer",
    "extended_functional",
    "descent_phi",
    "UNIQUE_MINIMUM",
    "MINIMUM_FAMILY",
    "NO_MINIMUM",
]

UNIQUE_MINIMUM = "unique_minimum"
MINIMUM_FAMILY = "minimum_family"
NO_MINIMUM = "no_minimum"


@dataclass
class FunctionalSpec:
    gramian: np.ndarray
    x0: np.ndarray
    t0: np.ndarray | None = None
    t: np.ndarray | None = None

    def __post_init__(self):
        if isinstance(self.gramian, GramianResult):
            if self.t0 is None:
                self.t0 = self.gramian.t0
            if self.t is None:
                self.t = self.gramian.t
            self.gramian = self.gramian.matrix
        self.gramian = np.atleast_2d(np.asarray(self.gramian, dtype=float))
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        n = self.gramian.shape[0]
        if self.gramian.shape != (n, n) or self.x0.shape != (n,):
            raise ValueError(f"inconsistent dimensions: C {self.gramian.shape}, x0 {self.x0.shape}")


def functional_value(spec: FunctionalSpec, v) -> float:
    v = np.asarray(v, dtype=float).ravel()
    return float(v @ spec.gramian @ v - 2.0 * spec.x0 @ v)


def functional_value_dual(system: MultitimeSystem, curve: PiecewiseCurve, x0, v,
                          cfg: PropagatorConfig | None = None) -> float:
    """``integral_gamma |N_a^T phi_v|^2 ds^a - 2 <x0, phi_v(t0)>`` with the
    adjoint solution ``phi_v(s) = chi(t0,s)^T v``, by direct quadrature."""
    v = np.asarray(v, dtype=float).ravel()
    x0 = np.asarray(x0, dtype=float).ravel()
    prop = propagate(system, curve, cfg)
    phi = np.einsum("qji,j->qi", prop.chi_t0_s, v)         # chi(t0,s)^T v
    N = system.eval_N(prop.points)
    NTphi = np.einsum("aqik,qi->aqk", N, phi)
    energy = prop.integrate(np.sum(NTphi ** 2, axis=-1))
    return float(energy - 2.0 * x0 @ v)


@dataclass
class MinResult:
    status: str
    v0: np.ndarray | None
    value: float
    residual: float
    rank: int
    eigenvalues: np.ndarray
    orthogonal_part: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def feasible(self) -> bool:
        return self.status != NO_MINIMUM

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "v0": None if self.v0 is None else self.v0.tolist(),
            "value": self.value,
            "residual": self.residual,
            "rank": self.rank,
            "eigenvalues": self.eigenvalues.tolist(),
        }


def minimize_functional(spec: FunctionalSpec,
                        sigma_tol: float = DEFAULT_TOLERANCES.sigma_tol) -> MinResult:
    """Minimize ``<C v, v> - 2 <x0, v>`` by eigendecomposition.

    Returns the minimum-norm minimizer when one exists.  When ``x0`` has a
    component outside ``Im C`` the form is unbounded below along that
    component and the status is ``no_minimum``.
    """
    C, x0 = spec.gramian, spec.x0
    scale = max(1.0, float(np.max(np.abs(C))))
    asym = float(np.max(np.abs(C - C.T)))
    if asym > 1e-9 * scale:
        raise ValueError(f"gramian is not symmetric (max|C - C^T| = {asym:.3e})")
    lam, U = np.linalg.eigh(0.5 * (C + C.T))
    if lam.size and lam[0] < -1e-9 * max(scale, float(np.max(np.abs(lam)))):
        warnings.warn(f"gramian is not positive semidefinite (min eigenvalue {lam[0]:.3e})",
                      stacklevel=2)
    lam_max = float(np.max(np.abs(lam))) if lam.size else 0.0
    keep = np.abs(lam) > sigma_tol * lam_max if lam_max > 0 else np.zeros_like(lam, bool)
    rank = int(keep.sum())
    coeff = U.T @ x0
    outside = U[:, ~keep] @ coeff[~keep]
    norm_x0 = float(np.linalg.norm(x0))
    if np.linalg.norm(outside) > sigma_tol * norm_x0:
        return MinResult(NO_MINIMUM, None, -math.inf, float(np.linalg.norm(outside)),
                         rank, lam, outside)
    v0 = U[:, keep] @ (coeff[keep] / lam[keep])
    status = UNIQUE_MINIMUM if rank == C.shape[0] else MINIMUM_FAMILY
    return MinResult(status, v0, float(-x0 @ v0), float(np.linalg.norm(C @ v0 - x0)),
                     rank, lam, outside)


class GramianControl:
    """``u_a(s) = N_a(s)^T chi(t0,s)^T v`` as an evaluator.

    Called on points it propagates along segments ``s -> t0``; along a
    :class:`Propagation` from ``t0`` it reuses the stored fundamental matrix.
    """

    def __init__(self, system: MultitimeSystem, t0, v, cfg: PropagatorConfig | None = None):
        self.system = system
        self.t0 = np.asarray(t0, dtype=float).ravel()
        self.v = np.asarray(v, dtype=float).ravel()
        self.cfg = cfg

    def _apply(self, chi_t0_s: np.ndarray, points: np.ndarray) -> np.ndarray:
        phi = np.einsum("qji,j->qi", chi_t0_s, self.v)
        N = self.system.eval_N(points)
        return np.einsum("aqik,qi->aqk", N, phi)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.system.n
        if self.system.M_is_zero:
            chis = np.broadcast_to(np.eye(n), (pts.shape[0], n, n))
        else:
            chis = np.stack([
                propagate(self.system, segment_curve(p, self.t0), self.cfg, nodes=False).Y_end
                for p in pts])
        return self._apply(chis, pts)

    def values_along(self, prop: Propagation) -> np.ndarray:
        if not np.allclose(prop.t0, self.t0, atol=1e-12):
            return self(prop.points)
        return self._apply(prop.chi_t0_s, prop.points)

    def expressions(self) -> list[list[Expression]] | None:
        """Closed-form control entries when ``chi`` is the identity (all M zero)."""
        if not self.system.M_is_zero:
            return None
        out = []
        for Na in self.system.N:
            col = []
            for j in range(self.system.k):
                terms = [f"({Na.entry(i, j)}) * ({format(float(self.v[i]), '.17g')})"
                         for i in range(self.system.n) if not Na.entry(i, j).is_zero()]
                col.append(parse_expr(" + ".join(terms) if terms else "0", self.system.m))
            out.append(col)
        return out

    def describe(self) -> list[str]:
        exprs = self.expressions()
        vec = "(" + ", ".join(format(x, ".17g") for x in self.v) + ")"
        t0 = "(" + ", ".join(format(x, ".17g") for x in self.t0) + ")"
        lines = []
        for a in range(self.system.m):
            base = f"u_{a + 1}(s) = N_{a + 1}(s)^T chi({t0}, s)^T v, v = {vec}"
            if exprs is not None:
                base += " = [" + ", ".join(str(e) for e in exprs[a]) + "]"
            lines.append(base)
        return lines


def synthesize_control(system: MultitimeSystem, t0, v,
                       cfg: PropagatorConfig | None = None) -> GramianControl:
    return GramianControl(system, t0, v, cfg)


@dataclass
class TransferPlan:
    t0: np.ndarray
    x0: np.ndarray
    t: np.ndarray
    y: np.ndarray
    w: np.ndarray
    gramian: GramianResult
    minimum: MinResult
    control: GramianControl | None
    admissible: bool
    warnings: list[str] = field(default_factory=list)
    membership_tol: float = DEFAULT_TOLERANCES.membership

    @property
    def v(self) -> np.ndarray | None:
        return self.minimum.v0

    @property
    def feasible(self) -> bool:
        if not self.minimum.feasible:
            return False
        res = np.linalg.norm(self.gramian.matrix @ self.minimum.v0 - self.w)
        return bool(res <= self.membership_tol * max(1.0, float(np.linalg.norm(self.w))))

    def as_dict(self, verification_error: float | None = None) -> dict:
        return {
            "t0": self.t0.tolist(),
            "x0": self.x0.tolist(),
            "t": self.t.tolist(),
            "y": self.y.tolist(),
            "w": self.w.tolist(),
            "v": None if self.v is None else self.v.tolist(),
            "value": self.minimum.value,
            "status": self.minimum.status,
            "feasible": self.feasible,
            "admissible": self.admissible,
            "gramian": self.gramian.matrix.tolist(),
            "gramian_rank": self.minimum.rank,
            "control": self.control.describe() if self.control is not None else None,
            "control_kind": "gramian control",
            "sign_convention": "C v = chi(t0,t) y - x0",
            "verification_error": verification_error,
            "warnings": list(self.warnings),
        }


def plan_transfer(system: MultitimeSystem, t0, x0, t, y, cfg: PropagatorConfig | None = None,
                  sigma_tol: float | None = None) -> TransferPlan:
    """Gramian control moving the phase ``(t0, x0)`` to ``(t, y)``.

    Solves ``C v = chi(t0,t) y - x0`` with ``C`` the segment gramian.  When
    the gramian path-independence relation fails the plan is only formal:
    the synthesized inputs need not be admissible controls.
    """
    tol = system.tolerances
    sigma_tol = tol.sigma_tol if sigma_tol is None else sigma_tol
    t0 = np.asarray(t0, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    x0 = np.asarray(x0, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    notes = []
    if not check_II4(system).passed:
        notes.append("II4 fails: the fundamental matrix is path dependent")
    ii6 = check_II6(system)
    admissible = ii6.passed
    if not admissible:
        notes.append("II6 fails: control admissibility not guaranteed (formal plan)")
    if np.any(t0 > t):
        notes.append("t0 <= t violated componentwise: gramian need not be positive semidefinite")
    prop = propagate(system, segment_curve(t0, t), cfg)
    g = gramian_from_propagation(system, prop)
    chi_t0_t = np.linalg.inv(prop.Y_end)
    w = chi_t0_t @ y - x0
    res = minimize_functional(FunctionalSpec(g, w, t0, t), sigma_tol)
    control = synthesize_control(system, t0, res.v0, cfg) if res.feasible else None
    return TransferPlan(t0, x0, t, y, w, g, res, control, admissible, notes, tol.membership)


def verify_transfer(system: MultitimeSystem, plan: TransferPlan,
                    curve: PiecewiseCurve | None = None,
                    cfg: PropagatorConfig | None = None) -> float:
    """``|x(t) - y|`` after simulating the plan's control from ``(t0, x0)``."""
    if plan.control is None:
        raise ValueError("plan is infeasible; nothing to verify")
    curve = curve or segment_curve(plan.t0, plan.t)
    x_end = solve_state(system, plan.control, Phase(plan.t0, plan.x0), curve, cfg)
    return float(np.linalg.norm(x_end - plan.y))


def extended_functional(system: MultitimeSystem, curve: PiecewiseCurve, x0,
                        phi: Sequence[Expression | str], epsabs: float = 1e-11,
                        epsrel: float = 1e-12) -> float:
    """``integral_gamma |N_a^T phi|^2 ds^a - 2 <x0, phi(t0)>`` for an arbitrary
    expression-valued ``phi``, by adaptive quadrature on every curve piece."""
    x0 = np.asarray(x0, dtype=float).ravel()
    exprs = [parse_expr(p, system.m) if not isinstance(p, Expression) else p for p in phi]
    if len(exprs) != system.n:
        raise ValueError(f"phi needs n={system.n} components")

    def integrand(u, piece):
        pts = piece.native_position(np.array([u]))
        vel = piece.native_velocity(np.array([u]))[0]
        ph = np.array([eval_array(e, pts)[0] for e in exprs])
        N = system.eval_N(pts)[:, 0]                     # (m, n, k)
        return float(sum(np.sum((N[a].T @ ph) ** 2) * vel[a] for a in range(system.m)))

    total = 0.0
    for piece in curve.pieces:
        lo, hi = piece.native
        val, _ = integrate.quad(integrand, lo, hi, args=(piece,), epsabs=epsabs,
                                epsrel=epsrel, limit=400)
        total += val
    phi_t0 = np.array([eval_array(e, curve.start[None, :])[0] for e in exprs])
    return float(total - 2.0 * x0 @ phi_t0)


def descent_phi(q: float, a: float, b: float, t0) -> list[Expression]:
    """Test functions along which the extended functional descends without bound.

    ``phi_1(s) = c sqrt(q / (1 + q^2 (s1 + s2 - t0_1 - t0_2)^2))`` with
    ``c = a + b`` (``phi_2 = phi_1``) or, when ``b = -a``, ``c = a``
    (``phi_2 = -phi_1``).
    """
    if a == 0 and b == 0:
        raise ValueError("x0 must be nonzero")
    if q <= 0:
        raise ValueError("q must be positive")
    t0 = np.asarray(t0, dtype=float).ravel()
    c, sign = (a + b, 1.0) if a + b != 0 else (a, -1.0)
    shift = float(t0[0] + t0[1])
    text = f"({float(c)!r}) * sqrt(({float(q)!r}) / (1 + ({float(q)!r})^2 * (t1 + t2 - ({shift!r}))^2))"
    phi1 = parse_expr(text, 2)
    phi2 = phi1 if sign > 0 else parse_expr(f"-({text})", 2)
    return [phi1, phi2]
