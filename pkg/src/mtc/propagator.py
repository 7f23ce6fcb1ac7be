"""Fundamental matrix and state propagation along curves.

Along a curve ``gamma`` the fundamental matrix ``Y(u) = chi(gamma(u), t0)``
solves the matrix ODE ``dY/du = A(u) Y`` with ``A = sum_a M_a(gamma) dgamma^a/du``
and ``Y = I`` at the start.  It is integrated with fixed-step RK4 on each
piece.  Curvilinear integrals are evaluated with composite Gauss-Legendre
rules on the same pieces; ``Y`` at the quadrature nodes is recovered from the
RK4 grid by cubic Hermite interpolation using the stored derivatives
``A Y``.
"""
from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .curves import PiecewiseCurve, segment_curve
from .expressions import MatrixExpr, eval_matrix_array
from .system import MultitimeSystem, check_II4

__all__ = [
    "PropagatorConfig",
    "Phase",
    "Propagation",
    "PropagationError",
    "CurveOutsideDomainError",
    "IntegrabilityWarning",
    "propagate",
    "fundamental_matrix",
    "compose_check",
    "solve_state",
    "gauss_legendre",
]


class PropagationError(RuntimeError):
    pass


class CurveOutsideDomainError(PropagationError):
    def __init__(self, point, domain):
        self.point = tuple(float(x) for x in point)
        super().__init__(f"curve leaves the domain {domain} at t={self.point}")


class IntegrabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PropagatorConfig:
    steps_per_segment: int = 256
    panels: int = 64
    gl_order: int = 5

    def __post_init__(self):
        if self.steps_per_segment < 1 or self.panels < 1 or self.gl_order < 1:
            raise ValueError("propagator counts must be positive")
        if self.steps_per_segment % self.panels:
            raise ValueError("steps_per_segment must be a multiple of panels")

    @classmethod
    def for_system(cls, system: MultitimeSystem, **overrides) -> "PropagatorConfig":
        params = {k: v for k, v in system.propagator.items()
                  if k in ("steps_per_segment", "panels", "gl_order")}
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**params)

    def refined(self, factor: int = 2) -> "PropagatorConfig":
        return replace(self, steps_per_segment=self.steps_per_segment * factor,
                       panels=self.panels * factor)


@dataclass(frozen=True)
class Phase:
    t: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).ravel())
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).ravel())


@functools.lru_cache(maxsize=16)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


@dataclass
class Propagation:
    """Result of integrating the fundamental matrix along one curve.

    ``points``, ``velocity`` and ``weights`` describe the quadrature nodes:
    ``integral_gamma f_a(s) ds^a ~= sum_q weights[q] * sum_a f_a(points[q]) velocity[q, a]``.
    ``Y[q]`` is ``chi(points[q], t0)``.
    """

    curve: PiecewiseCurve
    cfg: PropagatorConfig
    Y_end: np.ndarray
    points: np.ndarray | None = None
    velocity: np.ndarray | None = None
    weights: np.ndarray | None = None
    Y: np.ndarray | None = None

    @property
    def t0(self) -> np.ndarray:
        return self.curve.start

    @property
    def t(self) -> np.ndarray:
        return self.curve.end

    @functools.cached_property
    def chi_t0_s(self) -> np.ndarray:
        """``chi(t0, s)`` at every node (inverse of ``Y``)."""
        n = self.Y.shape[-1]
        eye = np.broadcast_to(np.eye(n), self.Y.shape)
        return np.linalg.solve(self.Y, eye)

    @property
    def chi_t_s(self) -> np.ndarray:
        """``chi(t, s) = Y(b) Y(u)^-1`` at every node."""
        return self.Y_end @ self.chi_t0_s

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """``sum_q w_q sum_a values[a, q] * velocity[q, a]`` for ``values`` of
        shape ``(m, Q, ...)``."""
        vel = self.velocity.T  # (m, Q)
        extra = values.ndim - 2
        scale = (vel * self.weights)[(...,) + (None,) * extra]
        return np.sum(values * scale, axis=(0, 1))


def _ii4_ok(system: MultitimeSystem) -> bool:
    cached = system.__dict__.get("_ii4_ok")
    if cached is None:
        cached = check_II4(system).passed
        system.__dict__["_ii4_ok"] = cached
        if not cached:
            warnings.warn(f"system {system.name!r} fails the II4 integrability check; "
                          "the fundamental matrix depends on the curve", IntegrabilityWarning,
                          stacklevel=3)
    return cached


def _check_domain(system: MultitimeSystem, pts: np.ndarray):
    inside = system.domain.contains(pts)
    if not inside.all():
        raise CurveOutsideDomainError(pts[int(np.argmin(inside))], system.domain)


def propagate(system: MultitimeSystem, curve: PiecewiseCurve,
              cfg: PropagatorConfig | None = None, nodes: bool = True) -> Propagation:
    """Integrate ``Y`` along ``curve`` and (optionally) tabulate quadrature nodes."""
    cfg = cfg or PropagatorConfig.for_system(system)
    if curve.m != system.m:
        raise PropagationError(f"curve lives in R^{curve.m}, system has m={system.m}")
    _ii4_ok(system)
    n = system.n
    S = cfg.steps_per_segment
    xg, wg = gauss_legendre(cfg.gl_order)
    Y = np.eye(n)
    node_pts, node_vel, node_w, node_Y = [], [], [], []
    for piece in curve.pieces:
        lo, hi = piece.native
        h = (hi - lo) / S
        if nodes:
            H = (hi - lo) / cfg.panels
            u_nodes = (lo + H * (np.arange(cfg.panels)[:, None] + xg[None, :])).ravel()
            pts_n = piece.native_position(u_nodes)
            vel_n = piece.native_velocity(u_nodes)
            _check_domain(system, pts_n)
            node_pts.append(pts_n)
            node_vel.append(vel_n)
            node_w.append(np.tile(H * wg, cfg.panels))
        u_half = lo + 0.5 * h * np.arange(2 * S + 1)
        pts = piece.native_position(u_half)
        _check_domain(system, pts)
        if system.M_is_zero:
            if nodes:
                node_Y.append(np.broadcast_to(Y, (u_nodes.shape[0], n, n)).copy())
            continue
        A = system.generator(pts, piece.native_velocity(u_half))
        if not np.all(np.isfinite(A)):
            raise PropagationError("non-finite generator along the curve")
        Ys = np.empty((S + 1, n, n))
        Ys[0] = Y
        for i in range(S):
            A0, Am, A1 = A[2 * i], A[2 * i + 1], A[2 * i + 2]
            k1 = A0 @ Y
            k2 = Am @ (Y + 0.5 * h * k1)
            k3 = Am @ (Y + 0.5 * h * k2)
            k4 = A1 @ (Y + h * k3)
            Y = Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            Ys[i + 1] = Y
        if not np.all(np.isfinite(Y)):
            raise PropagationError("fundamental matrix became non-finite")
        if nodes:
            dYs = A[0::2] @ Ys
            node_Y.append(_hermite(u_nodes, lo, h, Ys, dYs))
    if not nodes:
        return Propagation(curve, cfg, Y)
    return Propagation(curve, cfg, Y, np.concatenate(node_pts), np.concatenate(node_vel),
                       np.concatenate(node_w), np.concatenate(node_Y))


def _hermite(u: np.ndarray, lo: float, h: float, Ys: np.ndarray, dYs: np.ndarray) -> np.ndarray:
    S = Ys.shape[0] - 1
    i = np.clip(np.floor((u - lo) / h).astype(int), 0, S - 1)
    th = ((u - lo) - i * h) / h
    th2, th3 = th * th, th * th * th
    h00 = 2 * th3 - 3 * th2 + 1
    h10 = th3 - 2 * th2 + th
    h01 = -2 * th3 + 3 * th2
    h11 = th3 - th2
    c = (slice(None), None, None)
    return (h00[c] * Ys[i] + (h * h10)[c] * dYs[i]
            + h01[c] * Ys[i + 1] + (h * h11)[c] * dYs[i + 1])


def fundamental_matrix(system: MultitimeSystem, curve: PiecewiseCurve,
                       cfg: PropagatorConfig | None = None) -> np.ndarray:
    """``chi(t, s)`` for a curve running from ``s`` to ``t``."""
    return propagate(system, curve, cfg, nodes=False).Y_end


def chi(system: MultitimeSystem, t, s, cfg: PropagatorConfig | None = None) -> np.ndarray:
    """``chi(t, s)`` along the straight segment from ``s`` to ``t``."""
    return fundamental_matrix(system, segment_curve(s, t), cfg)


def compose_check(system: MultitimeSystem, r, s, t, cfg: PropagatorConfig | None = None) -> float:
    """``max|chi(t,s) chi(s,r) - chi(t,r)|`` from three segment propagations."""
    lhs = chi(system, t, s, cfg) @ chi(system, s, r, cfg)
    return float(np.max(np.abs(lhs - chi(system, t, r, cfg))))



def control_values(u, prop: Propagation) -> np.ndarray:
    """Evaluate a control at the nodes of ``prop``; shape ``(m, Q, k)``."""
    if hasattr(u, "values_along"):
        return np.asarray(u.values_along(prop), dtype=float)
    if callable(u):
        return np.asarray(u(prop.points), dtype=float)
    return np.stack([eval_matrix_array(ua, prop.points)[:, :, 0] for ua in u])


def solve_state(system: MultitimeSystem, u, phase0: Phase, curve: PiecewiseCurve,
                cfg: PropagatorConfig | None = None) -> np.ndarray:
    """State at the end of ``curve`` starting from ``phase0``::

        x(t) = chi(t,t0) x0 + integral_gamma chi(t,s) N_a(s) u_a(s) ds^a

    ``u`` is a sequence of m ``k x 1`` :class:`MatrixExpr`, a callable mapping
    an ``(P, m)`` array of points to an ``(m, P, k)`` array, or an object with
    a ``values_along(propagation)`` method.
    """
    if not np.allclose(curve.start, phase0.t, rtol=0, atol=1e-12):
        raise PropagationError(f"curve starts at {tuple(curve.start)}, phase at {tuple(phase0.t)}")
    prop = propagate(system, curve, cfg)
    U = control_values(u, prop)
    if U.shape != (system.m, prop.points.shape[0], system.k):
        raise PropagationError(f"control values have shape {U.shape}")
    N = system.eval_N(prop.points)
    forcing = np.einsum("aqij,aqj->aqi", N, U)
    inner = prop.integrate(np.einsum("qij,aqj->aqi", prop.chi_t0_s, forcing))
    return prop.Y_end @ (phase0.x + inner)
