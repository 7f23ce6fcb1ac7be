"""Curve gramians, their images, and the Im-gramian space estimator."""
from __future__ import annotations

import csv
import io
import itertools
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

from .curves import PiecewiseCurve, monotone_family, reverse, segment_curve
from .defaults import DEFAULT_TOLERANCES
from .propagator import Propagation, PropagatorConfig, propagate
from .system import MultitimeSystem

__all__ = [
    "GramianResult",
    "Subspace",
    "WEstimate",
    "ReversalReport",
    "curve_gramian",
    "gramian_from_propagation",
    "reversal_check",
    "image_subspace",
    "intersect_subspaces",
    "largest_principal_angle",
    "im_gramian_space",
    "w_flow_check",
    "path_independence_check",
    "kernel_vanishing",
    "matrix_to_csv",
    "thread_count",
]


def thread_count() -> int:
    """Worker cap from ``MTC_THREADS`` (default: CPU count)."""
    raw = os.environ.get("MTC_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _parallel_map(fn, items):
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class GramianResult:
    matrix: np.ndarray
    curve_id: str
    cfg: PropagatorConfig
    symmetry_residual: float
    eigenvalues: np.ndarray
    t0: np.ndarray
    t: np.ndarray

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0]) if self.eigenvalues.size else 0.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def rank(self, sigma_tol: float = DEFAULT_TOLERANCES.sigma_tol) -> int:
        return image_subspace(self, sigma_tol).dim

    def as_dict(self, sigma_tol: float = DEFAULT_TOLERANCES.sigma_tol) -> dict:
        return {
            "curve_id": self.curve_id,
            "t0": self.t0.tolist(),
            "t": self.t.tolist(),
            "matrix": self.matrix.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "rank": self.rank(sigma_tol),
            "sigma_tol": sigma_tol,
            "symmetry_residual": self.symmetry_residual,
            "min_eigenvalue": self.min_eigenvalue,
            "steps_per_segment": self.cfg.steps_per_segment,
            "panels": self.cfg.panels,
            "gl_order": self.cfg.gl_order,
        }


@dataclass
class Subspace:
    """Subspace of R^n with an orthonormal basis stored column-wise."""

    basis: np.ndarray
    sigma_tol: float = DEFAULT_TOLERANCES.sigma_tol
    vacuous: bool = False

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        if self.basis.ndim != 2:
            raise ValueError("basis must be an (n, r) array")

    @classmethod
    def full(cls, n: int, **kw) -> "Subspace":
        return cls(np.eye(n), **kw)

    @classmethod
    def zero(cls, n: int, **kw) -> "Subspace":
        return cls(np.zeros((n, 0)), **kw)

    @classmethod
    def span(cls, vectors, tol: float = 1e-12) -> "Subspace":
        """Orthonormal basis of the column span of ``vectors`` (shape (n, r))."""
        V = np.asarray(vectors, dtype=float)
        if V.size == 0 or V.shape[1] == 0:
            return cls.zero(V.shape[0])
        U, s, _ = np.linalg.svd(V, full_matrices=False)
        r = int(np.sum(s > tol * max(1.0, s[0]))) if s.size else 0
        return cls(U[:, :r])

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def complement(self) -> "Subspace":
        if self.dim == 0:
            return Subspace.full(self.n, sigma_tol=self.sigma_tol)
        U, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(U[:, self.dim:], self.sigma_tol)

    def residual(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(x - self.basis @ (self.basis.T @ x)))

    def contains(self, x, tol: float = DEFAULT_TOLERANCES.membership) -> bool:
        x = np.asarray(x, dtype=float)
        return self.residual(x) <= tol * max(1.0, float(np.linalg.norm(x)))

    def orthonormality_error(self) -> float:
        if self.dim == 0:
            return 0.0
        return float(np.max(np.abs(self.basis.T @ self.basis - np.eye(self.dim))))


def gramian_from_propagation(system: MultitimeSystem, prop: Propagation) -> GramianResult:
    N = system.eval_N(prop.points)                       # (m, Q, n, k)
    Z = np.einsum("qij,aqjk->aqik", prop.chi_t0_s, N)     # chi(t0,s) N_a(s)
    raw = prop.integrate(Z @ np.swapaxes(Z, -1, -2))
    sym_res = float(np.max(np.abs(raw - raw.T)))
    C = 0.5 * (raw + raw.T)
    return GramianResult(C, prop.curve.curve_id, prop.cfg, sym_res,
                         np.linalg.eigvalsh(C), prop.t0, prop.t)


def curve_gramian(system: MultitimeSystem, curve: PiecewiseCurve,
                  cfg: PropagatorConfig | None = None) -> GramianResult:
    """``C_gamma = integral_gamma chi(t0,s) N_a N_a^T chi(t0,s)^T ds^a``."""
    return gramian_from_propagation(system, propagate(system, curve, cfg))


def image_subspace(g: GramianResult | np.ndarray, sigma_tol: float = DEFAULT_TOLERANCES.sigma_tol) -> Subspace:
    """Eigenvectors with ``|eigenvalue| > sigma_tol * max|eigenvalue|``.

    Absolute values so that gramians of decreasing curves (negative
    semidefinite) get their true image.
    """
    C = g.matrix if isinstance(g, GramianResult) else np.asarray(g, dtype=float)
    lam, vec = np.linalg.eigh(0.5 * (C + C.T))
    scale = np.max(np.abs(lam)) if lam.size else 0.0
    if scale == 0.0:
        return Subspace.zero(C.shape[0], sigma_tol=sigma_tol)
    keep = np.abs(lam) > sigma_tol * scale
    return Subspace(vec[:, keep], sigma_tol)


def intersect_subspaces(spaces: list[Subspace], n: int | None = None,
                        tol: float = 1e-10) -> Subspace:
    """Intersection via the complement of the sum of complements.

    An empty list gives R^n flagged ``vacuous``.
    """
    if not spaces:
        if n is None:
            raise ValueError("ambient dimension needed for an empty intersection")
        return Subspace.full(n, vacuous=True)
    dims = {s.n for s in spaces}
    if len(dims) != 1 or (n is not None and dims != {n}):
        raise ValueError(f"subspaces live in different ambient spaces: {sorted(dims)}")
    n = dims.pop()
    comps = np.hstack([s.complement().basis for s in spaces])
    perp = Subspace.span(comps, tol)
    out = perp.complement()
    out.sigma_tol = min(s.sigma_tol for s in spaces)
    return out


def largest_principal_angle(a: Subspace, b: Subspace) -> float:
    """Largest principal angle; ``pi/2`` if dimensions differ, 0 for two zero spaces."""
    if a.n != b.n:
        raise ValueError("subspaces live in different ambient spaces")
    if a.dim != b.dim:
        return float(np.pi / 2)
    if a.dim == 0:
        return 0.0
    return float(np.max(subspace_angles(a.basis, b.basis)))


@dataclass
class ReversalReport:
    residual: float
    rank_forward: int
    rank_reverse: int

    @property
    def ranks_match(self) -> bool:
        return self.rank_forward == self.rank_reverse


def reversal_check(system: MultitimeSystem, curve: PiecewiseCurve,
                   cfg: PropagatorConfig | None = None,
                   sigma_tol: float = DEFAULT_TOLERANCES.sigma_tol) -> ReversalReport:
    """``max|chi(t,t0) C_gamma chi(t,t0)^T + C_{gamma^-}|`` and the two ranks."""
    prop = propagate(system, curve, cfg)
    fwd = gramian_from_propagation(system, prop)
    bwd = curve_gramian(system, reverse(curve), cfg)
    X = prop.Y_end
    res = float(np.max(np.abs(X @ fwd.matrix @ X.T + bwd.matrix)))
    return ReversalReport(res, fwd.rank(sigma_tol), image_subspace(bwd, sigma_tol).dim)


@dataclass
class WEstimate:
    subspace: Subspace
    t0: np.ndarray
    t: np.ndarray
    curve_ids: list[str]
    ranks: list[int]
    eigenvalues: list[np.ndarray]
    seed: int | None
    warnings: list[str] = field(default_factory=list)
    note: str = ("finite curve family: the estimate contains the Im-gramian space "
                 "(equality when the gramian is path independent)")

    @property
    def dim(self) -> int:
        return self.subspace.dim

    def as_dict(self) -> dict:
        return {
            "t0": self.t0.tolist(),
            "t": self.t.tolist(),
            "dimension": self.dim,
            "basis": self.subspace.basis.tolist(),
            "sigma_tol": self.subspace.sigma_tol,
            "vacuous": self.subspace.vacuous,
            "seed": self.seed,
            "curves": [{"curve_id": c, "rank": r, "eigenvalues": e.tolist()}
                       for c, r, e in zip(self.curve_ids, self.ranks, self.eigenvalues)],
            "warnings": list(self.warnings),
            "note": self.note,
        }


def im_gramian_space(system: MultitimeSystem, t0, t, count: int | None = None,
                     seed: int | None = None, cfg: PropagatorConfig | None = None,
                     sigma_tol: float | None = None,
                     curves: list[PiecewiseCurve] | None = None) -> WEstimate:
    """Intersect ``Im C_gamma`` over a seeded monotone family from ``t0`` to ``t``."""
    tol = system.tolerances
    count = tol.family_size if count is None else count
    seed = tol.seed if seed is None else seed
    sigma_tol = tol.sigma_tol if sigma_tol is None else sigma_tol
    t0 = np.asarray(t0, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.array_equal(t0, t):
        msg = "t0 == t: gramian vanishes, estimate is {0}"
        warnings.warn(msg, stacklevel=2)
        return WEstimate(Subspace.zero(system.n, sigma_tol=sigma_tol), t0, t, [], [], [], seed, [msg])
    if curves is None:
        curves = monotone_family(t0, t, count, seed, system.domain)
    curves = sorted(curves, key=lambda c: c.curve_id)
    results = _parallel_map(lambda c: curve_gramian(system, c, cfg), curves)
    images = [image_subspace(g, sigma_tol) for g in results]
    W = intersect_subspaces(images, system.n)
    W.sigma_tol = sigma_tol
    return WEstimate(W, t0, t, [c.curve_id for c in curves], [s.dim for s in images],
                     [g.eigenvalues for g in results], seed)


def w_flow_check(system: MultitimeSystem, t0, t, count: int | None = None,
                 seed: int | None = None, cfg: PropagatorConfig | None = None,
                 sigma_tol: float | None = None) -> float:
    """Largest principal angle between ``W(t, t0)`` and ``chi(t,t0) W(t0, t)``."""
    fwd = im_gramian_space(system, t0, t, count, seed, cfg, sigma_tol)
    bwd = im_gramian_space(system, t, t0, count, seed, cfg, sigma_tol)
    X = propagate(system, segment_curve(t0, t), cfg, nodes=False).Y_end
    mapped = Subspace.span(X @ fwd.subspace.basis)
    return largest_principal_angle(bwd.subspace, mapped)


def path_independence_check(system: MultitimeSystem, curves: list[PiecewiseCurve],
                            cfg: PropagatorConfig | None = None) -> float:
    """Largest pairwise ``max|C_i - C_j|`` over curves with common endpoints."""
    if not curves:
        return 0.0
    ends = {(tuple(c.start), tuple(c.end)) for c in curves}
    if any(not np.allclose(curves[0].start, c.start, atol=1e-12)
           or not np.allclose(curves[0].end, c.end, atol=1e-12) for c in curves):
        raise ValueError(f"curves do not share endpoints: {sorted(ends)}")
    mats = [curve_gramian(system, c, cfg).matrix for c in curves]
    return max((float(np.max(np.abs(a - b))) for a, b in itertools.combinations(mats, 2)),
               default=0.0)


def kernel_vanishing(system: MultitimeSystem, curve: PiecewiseCurve,
                     cfg: PropagatorConfig | None = None,
                     sigma_tol: float = DEFAULT_TOLERANCES.sigma_tol) -> float:
    """Largest ``|v^T chi(t0,s) N_a(s)|`` over nodes, unit kernel vectors ``v`` of
    ``C_gamma`` and axes ``a`` whose endpoints differ (0 if the kernel is trivial)."""
    prop = propagate(system, curve, cfg)
    g = gramian_from_propagation(system, prop)
    ker = image_subspace(g, sigma_tol).complement()
    if ker.dim == 0:
        return 0.0
    moving = [a for a in range(system.m) if curve.start[a] != curve.end[a]]
    if not moving:
        return 0.0
    N = system.eval_N(prop.points)
    Z = np.einsum("qij,aqjk->aqik", prop.chi_t0_s, N)
    P = np.einsum("ir,aqik->aqrk", ker.basis, Z[moving])
    return float(np.max(np.linalg.norm(P, axis=-1)))


def matrix_to_csv(matrix: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(matrix):
        writer.writerow([format(float(x), ".17g") for x in row])
    return buf.getvalue()
