"""Default numerical settings, in one place.

==========================  ========  ==============================================
name                        default   meaning
==========================  ========  ==============================================
``residual``                1e-9      pass threshold for II4/II5/II6 residuals
``sigma_tol``               1e-10     relative eigenvalue cutoff for ranks/images
``membership``              1e-7      ``|x - B B^T x| <= membership * max(1, |x|)``
``grid_points``             11        probe grid points per axis
``probe_inset``             1e-3      inward shift of open domain bounds
``steps_per_segment``       256       RK4 steps per curve piece
``panels``                  64        Gauss-Legendre panels per curve piece
``gl_order``                5         Gauss-Legendre nodes per panel
``family_size``             8         random monotone curves in a W estimate
``seed``                    42        default RNG seed
==========================  ========  ==============================================

Every entry can be overridden from a system document (``"tolerances"``,
``"propagator"``) or from CLI flags.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    residual: float = 1e-9
    sigma_tol: float = 1e-10
    membership: float = 1e-7
    grid_points: int = 11
    probe_inset: float = 1e-3
    family_size: int = 8
    seed: int = 42

    def updated(self, **overrides) -> "Tolerances":
        known = {f.name for f in fields(self)}
        clean = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(clean) - known
        if unknown:
            raise ValueError(f"unknown tolerance(s): {sorted(unknown)}")
        return replace(self, **clean)


DEFAULT_TOLERANCES = Tolerances()
