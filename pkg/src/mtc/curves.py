"""Piecewise C^1 curves in R^m.

A :class:`PiecewiseCurve` is a list of pieces over consecutive parameter
intervals ``a = tau_0 < ... < tau_q = b``.  Every piece carries two
parameterizations:

* the public one in ``tau`` (``curve(tau)``, ``curve.derivative(tau)``), and
* a *native* one in ``u`` used for integration.  For most pieces the two
  coincide.  Monotone pieces with a square-root profile use ``s = u**2`` so
  that the native velocity stays bounded at the endpoint where the public
  derivative blows up.  Line integrals are invariant under this change of
  parameter, so the propagator only ever sees native velocities.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "CurveError",
    "Piece",
    "LinePiece",
    "ProfilePiece",
    "ReversedPiece",
    "PiecewiseCurve",
    "MonotoneProfile",
    "segment_curve",
    "monotone_curve",
    "staircase_curve",
    "reverse",
    "is_monotone",
    "increasing_family",
    "monotone_family",
    "random_profile",
    "PROFILE_POWERS",
    "curve_from_spec",
]

PROFILE_POWERS = (0.5, 2.0, 3.0)
MONOTONE_SAMPLES = 512


class CurveError(ValueError):
    pass


def _as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise CurveError(f"multitime components must be finite: {p!r}")
    return arr


class Piece:
    """One C^1 piece.  ``lo, hi`` is the public interval, ``native`` the
    integration interval.  Subclasses implement the four evaluators on
    1-D arrays and return arrays of shape ``(N, m)``."""

    lo: float
    hi: float

    @property
    def native(self) -> tuple[float, float]:
        return (0.0, 1.0)

    def position(self, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def velocity(self, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def native_position(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def native_velocity(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def native_to_public(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class LinePiece(Piece):
    start: np.ndarray
    end: np.ndarray
    lo: float = 0.0
    hi: float = 1.0

    def _s(self, tau):
        return (np.asarray(tau, dtype=float) - self.lo) / (self.hi - self.lo)

    def position(self, tau):
        s = self._s(tau)[:, None]
        return (1.0 - s) * self.start + s * self.end

    def velocity(self, tau):
        n = np.asarray(tau).shape[0]
        return np.tile((self.end - self.start) / (self.hi - self.lo), (n, 1))

    def native_position(self, u):
        u = np.asarray(u, dtype=float)[:, None]
        return (1.0 - u) * self.start + u * self.end

    def native_velocity(self, u):
        return np.tile(self.end - self.start, (np.asarray(u).shape[0], 1))

    def native_to_public(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float)


@dataclass(frozen=True)
class MonotoneProfile:
    """Per-axis reparameterization ``h(s) = (1 - w) s + w s**p``."""

    weights: tuple[float, ...]
    powers: tuple[float, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.powers):
            raise CurveError("profile weights and powers differ in length")
        for w, p in zip(self.weights, self.powers):
            if not 0.0 <= w <= 1.0:
                raise CurveError(f"profile weight {w} outside [0, 1]")
            if p <= 0:
                raise CurveError(f"profile power {p} must be positive")

    @classmethod
    def identity(cls, m: int) -> "MonotoneProfile":
        return cls((0.0,) * m, (1.0,) * m)

    @classmethod
    def pure(cls, powers: Sequence[float]) -> "MonotoneProfile":
        """``h_alpha(s) = s**p_alpha`` on every axis."""
        return cls((1.0,) * len(powers), tuple(float(p) for p in powers))

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def warp(self) -> int:
        # fractional powers get an integer substitution s = u**2
        return 2 if any(0 < p < 1 for p in self.powers) else 1

    def h(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)[:, None]
        w = np.asarray(self.weights)
        p = np.asarray(self.powers)
        return (1.0 - w) * s + w * s ** p

    def dh(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)[:, None]
        w = np.asarray(self.weights)
        p = np.asarray(self.powers)
        with np.errstate(divide="ignore"):
            return (1.0 - w) + w * p * s ** (p - 1.0)

    def h_native(self, u) -> np.ndarray:
        k = self.warp
        u = np.asarray(u, dtype=float)[:, None]
        w = np.asarray(self.weights)
        p = np.asarray(self.powers)
        return (1.0 - w) * u ** k + w * u ** (p * k)

    def dh_native(self, u) -> np.ndarray:
        k = self.warp
        u = np.asarray(u, dtype=float)[:, None]
        w = np.asarray(self.weights)
        p = np.asarray(self.powers)
        lin = k * u ** (k - 1) if k > 1 else np.ones_like(u)
        pk = p * k
        with np.errstate(divide="ignore"):
            nonlin = np.where(pk == 1.0, 1.0, pk * u ** (pk - 1.0))
        return (1.0 - w) * lin + w * nonlin


@dataclass(frozen=True, eq=False)
class ProfilePiece(Piece):
    start: np.ndarray
    end: np.ndarray
    profile: MonotoneProfile
    lo: float = 0.0
    hi: float = 1.0

    def position(self, tau):
        s = (np.asarray(tau, dtype=float) - self.lo) / (self.hi - self.lo)
        return self.start + (self.end - self.start) * self.profile.h(s)

    def velocity(self, tau):
        s = (np.asarray(tau, dtype=float) - self.lo) / (self.hi - self.lo)
        return (self.end - self.start) * self.profile.dh(s) / (self.hi - self.lo)

    def native_position(self, u):
        return self.start + (self.end - self.start) * self.profile.h_native(u)

    def native_velocity(self, u):
        return (self.end - self.start) * self.profile.dh_native(u)

    def native_to_public(self, u):
        s = np.asarray(u, dtype=float) ** self.profile.warp
        return self.lo + (self.hi - self.lo) * s


@dataclass(frozen=True, eq=False)
class ReversedPiece(Piece):
    """``inner`` traversed backwards and relocated to ``[lo, hi]``."""

    inner: Piece
    lo: float = 0.0
    hi: float = 1.0

    @property
    def native(self):
        return self.inner.native

    def _flip_public(self, tau):
        # map [lo, hi] onto inner's [lo, hi] reversed
        s = (np.asarray(tau, dtype=float) - self.lo) / (self.hi - self.lo)
        return self.inner.hi - s * (self.inner.hi - self.inner.lo)

    def _flip_native(self, u):
        a, b = self.inner.native
        return a + b - np.asarray(u, dtype=float)

    def position(self, tau):
        return self.inner.position(self._flip_public(tau))

    def velocity(self, tau):
        scale = (self.inner.hi - self.inner.lo) / (self.hi - self.lo)
        return -self.inner.velocity(self._flip_public(tau)) * scale

    def native_position(self, u):
        return self.inner.native_position(self._flip_native(u))

    def native_velocity(self, u):
        return -self.inner.native_velocity(self._flip_native(u))

    def native_to_public(self, u):
        inner_tau = self.inner.native_to_public(self._flip_native(u))
        s = (self.inner.hi - inner_tau) / (self.inner.hi - self.inner.lo)
        return self.lo + s * (self.hi - self.lo)


@dataclass(frozen=True, eq=False)
class PiecewiseCurve:
    pieces: tuple[Piece, ...]
    curve_id: str = "curve"
    kind: str = "segment"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.pieces:
            raise CurveError("curve needs at least one piece")
        for left, right in zip(self.pieces, self.pieces[1:]):
            if left.hi != right.lo:
                raise CurveError("pieces must cover consecutive parameter intervals")
            gap = np.max(np.abs(left.position(np.array([left.hi]))
                                - right.position(np.array([right.lo]))))
            if gap > 1e-12:
                raise CurveError(f"curve is discontinuous at tau={left.hi} (gap {gap:g})")

    @property
    def a(self) -> float:
        return self.pieces[0].lo

    @property
    def b(self) -> float:
        return self.pieces[-1].hi

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([p.lo for p in self.pieces] + [self.b])

    @property
    def m(self) -> int:
        return self.start.shape[0]

    @property
    def start(self) -> np.ndarray:
        return self.pieces[0].position(np.array([self.a]))[0]

    @property
    def end(self) -> np.ndarray:
        return self.pieces[-1].position(np.array([self.b]))[0]

    def _locate(self, tau: np.ndarray) -> np.ndarray:
        inner = self.breakpoints[1:-1]
        return np.searchsorted(inner, tau, side="right")

    def _dispatch(self, tau, method: str) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if np.any(tau < self.a) or np.any(tau > self.b):
            raise CurveError(f"parameter outside [{self.a}, {self.b}]")
        which = self._locate(tau)
        out = np.empty((tau.shape[0], self.m))
        for j, piece in enumerate(self.pieces):
            sel = which == j
            if sel.any():
                out[sel] = getattr(piece, method)(tau[sel])
        return out

    def __call__(self, tau) -> np.ndarray:
        out = self._dispatch(tau, "position")
        return out[0] if np.ndim(tau) == 0 else out

    def derivative(self, tau) -> np.ndarray:
        out = self._dispatch(tau, "velocity")
        return out[0] if np.ndim(tau) == 0 else out

    def sample(self, count: int = 20) -> np.ndarray:
        return self(np.linspace(self.a, self.b, count))


def segment_curve(t0, t, curve_id: str = "segment") -> PiecewiseCurve:
    """Straight segment ``(1 - tau) t0 + tau t`` on ``[0, 1]``."""
    t0, t = _as_point(t0), _as_point(t)
    if t0.shape != t.shape:
        raise CurveError("endpoints differ in dimension")
    return PiecewiseCurve((LinePiece(t0, t),), curve_id, "segment")


def _direction(t0: np.ndarray, t: np.ndarray) -> str:
    up = np.any(t > t0)
    down = np.any(t < t0)
    if up and down:
        raise CurveError(f"not orderable: {tuple(t0)} -> {tuple(t)} mixes directions")
    return "decreasing" if down else "increasing"


def monotone_curve(t0, t, profile: MonotoneProfile, curve_id: str = "monotone") -> PiecewiseCurve:
    """``gamma^a(tau) = t0^a + (t^a - t0^a) h_a(tau)`` on ``[0, 1]``.

    The direction (increasing or decreasing) is inferred from the endpoints.
    """
    t0, t = _as_point(t0), _as_point(t)
    if profile.m != t0.shape[0] or t.shape != t0.shape:
        raise CurveError("profile and endpoints differ in dimension")
    direction = _direction(t0, t)
    return PiecewiseCurve((ProfilePiece(t0, t, profile),), curve_id, "monotone",
                          {"direction": direction, "weights": list(profile.weights),
                           "powers": list(profile.powers)})


def staircase_curve(t0, t, order: Sequence[int] | None = None,
                    curve_id: str = "staircase") -> PiecewiseCurve:
    """Axis-by-axis path, one unit-length piece per axis that moves.

    ``order`` lists 1-based axes in the order they are traversed (default
    1..m).  Not monotone in the strict sense; intended for path-independence
    checks.
    """
    t0, t = _as_point(t0), _as_point(t)
    m = t0.shape[0]
    order = list(range(1, m + 1)) if order is None else list(order)
    if sorted(order) != list(range(1, m + 1)):
        raise CurveError(f"staircase order must be a permutation of 1..{m}")
    pieces = []
    current = t0.copy()
    for axis in order:
        if t[axis - 1] == t0[axis - 1]:
            continue
        nxt = current.copy()
        nxt[axis - 1] = t[axis - 1]
        k = len(pieces)
        pieces.append(LinePiece(current, nxt, float(k), float(k + 1)))
        current = nxt
    if not pieces:
        pieces.append(LinePiece(t0, t))
    return PiecewiseCurve(tuple(pieces), curve_id, "staircase", {"order": order})


def reverse(c: PiecewiseCurve) -> PiecewiseCurve:
    """``gamma^-(tau) = gamma(a + b - tau)`` on the same interval."""
    a, b = c.a, c.b
    pieces = tuple(ReversedPiece(p, a + b - p.hi, a + b - p.lo) for p in reversed(c.pieces))
    meta = dict(c.meta)
    if "direction" in meta:
        meta["direction"] = "decreasing" if meta["direction"] == "increasing" else "increasing"
    cid = c.curve_id[:-8] if c.curve_id.endswith(":reverse") else c.curve_id + ":reverse"
    return PiecewiseCurve(pieces, cid, c.kind, meta)


def is_monotone(c: PiecewiseCurve, direction: str = "increasing",
                samples: int = MONOTONE_SAMPLES) -> bool:
    """Sampling check that ``c`` increases (decreases) from its start to its end.

    Axes whose endpoints differ must be strictly monotone over the sample and
    have a derivative of the right sign on every piece, vanishing only at
    isolated samples; axes with equal endpoints must stay constant.
    """
    if direction not in ("increasing", "decreasing"):
        raise ValueError(f"direction must be 'increasing' or 'decreasing', not {direction!r}")
    sign = 1.0 if direction == "increasing" else -1.0
    t0, t = c.start, c.end
    tau = np.linspace(c.a, c.b, samples)
    pts = c(tau)
    for axis in range(c.m):
        if t[axis] == t0[axis]:
            if np.max(np.abs(pts[:, axis] - t0[axis])) > 1e-12:
                return False
            continue
        if sign * (t[axis] - t0[axis]) < 0:
            return False
        if not np.all(sign * np.diff(pts[:, axis]) > 0):
            return False
        for piece in c.pieces:
            lo, hi = piece.native
            u = np.linspace(lo, hi, max(8, samples // len(c.pieces)))
            d = sign * piece.native_velocity(u)[:, axis]
            if np.any(d < 0):
                return False
            zero = d == 0
            if np.any(zero[1:] & zero[:-1]):
                return False
    return True


def random_profile(rng: np.random.Generator, m: int) -> MonotoneProfile:
    weights = tuple(float(x) for x in rng.uniform(0.0, 1.0, size=m))
    powers = tuple(float(PROFILE_POWERS[i]) for i in rng.integers(0, len(PROFILE_POWERS), size=m))
    return MonotoneProfile(weights, powers)


def monotone_family(t0, t, count: int, seed: int | None = 0, domain=None,
                    max_retries: int = 100) -> list[PiecewiseCurve]:
    """Segment plus ``count`` random-profile monotone curves from ``t0`` to ``t``.

    Works in either direction.  ``domain`` (anything with a ``contains``
    method over an ``(N, m)`` array) is checked on a dense sample; profiles
    leaving it are redrawn.
    """
    t0, t = _as_point(t0), _as_point(t)
    direction = _direction(t0, t)
    if np.array_equal(t0, t):
        raise CurveError("endpoints coincide; no monotone family")
    rng = np.random.default_rng(seed)
    family = [segment_curve(t0, t, "segment")]
    family[0].meta["direction"] = direction
    if domain is not None and not _inside(domain, family[0]):
        raise CurveError(f"segment {tuple(t0)} -> {tuple(t)} leaves domain {domain}")
    for i in range(count):
        for _ in range(max_retries):
            curve = monotone_curve(t0, t, random_profile(rng, t0.shape[0]), f"monotone-{i:03d}")
            if domain is None or _inside(domain, curve):
                break
        else:
            raise CurveError(f"could not keep a monotone curve inside domain {domain} "
                             f"after {max_retries} retries")
        family.append(curve)
    return family


def increasing_family(t0, t, count: int, seed: int | None = 0, domain=None) -> list[PiecewiseCurve]:
    """As :func:`monotone_family`, requiring ``t0 <= t`` componentwise."""
    t0, t = _as_point(t0), _as_point(t)
    if np.any(t0 > t):
        raise CurveError(f"increasing family needs t0 <= t componentwise, got {tuple(t0)} -> {tuple(t)}")
    return monotone_family(t0, t, count, seed, domain)


def _inside(domain, curve: PiecewiseCurve, samples: int = 257) -> bool:
    return bool(np.all(domain.contains(curve.sample(samples))))


def curve_from_spec(spec: dict | str | None, t0, t, seed: int | None = None) -> PiecewiseCurve:
    """Build a curve from a config entry.

    ``{"type": "segment"}``, ``{"type": "monotone", "weights": [...], "powers": [...]}``
    (or ``"seed"`` for a random profile), ``{"type": "staircase", "order": [...]}``.
    ``"reverse": true`` traverses the result backwards.  A bare string is
    taken as the type.
    """
    if spec is None:
        spec = {"type": "segment"}
    elif isinstance(spec, str):
        spec = {"type": spec}
    kind = spec.get("type", "segment")
    if kind == "segment":
        curve = segment_curve(t0, t)
    elif kind == "monotone":
        m = _as_point(t0).shape[0]
        if "weights" in spec or "powers" in spec:
            profile = MonotoneProfile(tuple(float(x) for x in spec.get("weights", [1.0] * m)),
                                      tuple(float(x) for x in spec.get("powers", [1.0] * m)))
        else:
            rng = np.random.default_rng(spec.get("seed", seed))
            profile = random_profile(rng, m)
        curve = monotone_curve(t0, t, profile, spec.get("id", "monotone"))
    elif kind == "staircase":
        curve = staircase_curve(t0, t, spec.get("order"))
    else:
        raise CurveError(f"unknown curve type {kind!r}")
    if spec.get("reverse"):
        curve = reverse(curve)
    return curve
