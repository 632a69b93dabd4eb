"""Families of radial initial conformal factors u0 with u_lo <= u0 <= u_hi."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

FAMILIES = ("constant", "smooth-bump", "high-frequency-oscillation", "user-table")


@dataclass(frozen=True)
class InitialDataSpec:
    """Untruncated initial data.

    constant:                    u0 = u_lo (requires u_lo == u_hi)
    smooth-bump:                 u0 = u_lo + (u_hi - u_lo) * b(r/width), with
                                 b(x) = 1/(1 + x^2) (profile "algebraic") or exp(-x^2) ("gaussian")
    high-frequency-oscillation:  u0 = mid + half * cos(frequency * r)
    user-table:                  clamped cubic spline through ``table``, constant past its last radius

    All closed-form families are even in r, hence smooth radial functions.
    The algebraic bump decays slowly, so truncating at r = k-1 perturbs it by
    O(width^2 / k^2); exhaustion sweeps rely on that signal.  The gaussian bump
    is numerically equal to u_lo across the cutoff band, which keeps refinement
    studies free of the cutoff's steep higher derivatives.
    """

    family: str
    u_lo: float
    u_hi: float
    frequency: float = 8.0
    width: float = 1.0
    profile: str = "algebraic"
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown initial-data family {self.family!r}; choose from {FAMILIES}")
        if not (0 < self.u_lo <= self.u_hi < np.inf):
            raise ValueError(f"need 0 < u_lo <= u_hi < inf, got u_lo={self.u_lo}, u_hi={self.u_hi}")
        if self.family == "constant" and self.u_lo != self.u_hi:
            raise ValueError("constant initial data needs u_lo == u_hi")
        if self.family == "smooth-bump" and self.width <= 0:
            raise ValueError("bump width must be positive")
        if self.profile not in ("algebraic", "gaussian"):
            raise ValueError(f"unknown bump profile {self.profile!r}")
        if self.family == "high-frequency-oscillation" and self.frequency <= 0:
            raise ValueError("oscillation frequency must be positive")
        if self.family == "user-table":
            self._check_table()

    def _check_table(self):
        if not self.table or len(self.table) < 4:
            raise ValueError("user-table needs at least 4 (r, u) rows")
        r = np.array([row[0] for row in self.table], dtype=float)
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("user-table radii must start at 0 and increase strictly")
        probe = self.evaluate(np.linspace(0.0, r[-1], 50 * len(r)))
        if probe.min() < self.u_lo * (1 - 1e-12) or probe.max() > self.u_hi * (1 + 1e-12):
            raise ValueError(
                f"user-table spline spans [{probe.min():.6g}, {probe.max():.6g}], outside [u_lo, u_hi]"
            )

    @cached_property
    def _spline(self):
        r = np.array([row[0] for row in self.table], dtype=float)
        u = np.array([row[1] for row in self.table], dtype=float)
        return CubicSpline(r, u, bc_type=((1, 0.0), (1, 0.0))), r[-1], u[-1]

    def evaluate(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        lo, hi = self.u_lo, self.u_hi
        if self.family == "constant":
            return np.full_like(r, lo)
        if self.family == "smooth-bump":
            x2 = (r / self.width) ** 2
            return lo + (hi - lo) * (np.exp(-x2) if self.profile == "gaussian" else 1.0 / (1.0 + x2))
        if self.family == "high-frequency-oscillation":
            return 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(self.frequency * r)
        spline, r_end, u_end = self._spline
        return np.where(r <= r_end, spline(np.minimum(r, r_end)), u_end)
