"""Model backgrounds: rotationally symmetric warped products dr^2 + rho(r)^2 g_{S^{m-1}}.

Every background carries declared curvature bounds ``r_hi`` and ``r_lo`` with
``-r_hi <= R_M(r) <= -r_lo <= 0``.  Custom warps are checked against those
bounds on a sample of radii when constructed and again on each grid they are
used with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gamma

MAX_DIMENSION = 12


class InvalidDimension(ValueError):
    pass


class InadmissibleBackground(ValueError):
    pass


def sphere_volume(n: int) -> float:
    """Volume of the unit round n-sphere, 2 pi^{(n+1)/2} / Gamma((n+1)/2)."""
    return 2.0 * math.pi ** ((n + 1) / 2) / gamma((n + 1) / 2)


# |S^{m-1}| for the admissible dimensions
SPHERE_AREA = {m: sphere_volume(m - 1) for m in range(3, MAX_DIMENSION + 1)}


def _check_dimension(m) -> int:
    if int(m) != m or m < 3:
        raise InvalidDimension(f"dimension must be an integer >= 3, got {m!r}")
    if m > MAX_DIMENSION:
        raise InvalidDimension(f"dimension {m} exceeds the supported maximum {MAX_DIMENSION}")
    return int(m)


@dataclass(frozen=True)
class GeometryConstants:
    dimension: int
    eta: float
    sphere_volume: float
    yamabe_value: float


def geometry_constants(m: int) -> GeometryConstants:
    m = _check_dimension(m)
    vol = sphere_volume(m)
    return GeometryConstants(
        dimension=m,
        eta=(m - 2) / 4,
        sphere_volume=vol,
        yamabe_value=m * (m - 2) / 4 * vol ** (2.0 / m),
    )


def yamabe_invariant_model(m: int) -> float:
    """Yamabe invariant shared by the round sphere, Euclidean and hyperbolic space."""
    return geometry_constants(m).yamabe_value


@dataclass(frozen=True)
class Warp:
    """A warp function together with the derivatives the curvature formula needs.

    ``one_minus_drho`` must evaluate ``1 - rho'(r)`` without cancellation, and
    ``d3rho0`` is ``rho'''(0)``, which fixes the curvature at the origin.
    """

    name: str
    rho: Callable[[np.ndarray], np.ndarray]
    drho: Callable[[np.ndarray], np.ndarray]
    d2rho: Callable[[np.ndarray], np.ndarray]
    one_minus_drho: Callable[[np.ndarray], np.ndarray]
    d3rho0: float


def linear_warp() -> Warp:
    return Warp(
        name="linear",
        rho=lambda r: np.asarray(r, dtype=float) * 1.0,
        drho=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        d2rho=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        one_minus_drho=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        d3rho0=0.0,
    )


def sinh_warp(scale: float = 1.0) -> Warp:
    a = float(scale)
    if a <= 0:
        raise InadmissibleBackground("curvature scale must be positive")
    return Warp(
        name="sinh" if a == 1.0 else f"sinh[{a!r}]",
        rho=lambda r: np.sinh(a * np.asarray(r, dtype=float)) / a,
        drho=lambda r: np.cosh(a * np.asarray(r, dtype=float)),
        d2rho=lambda r: a * np.sinh(a * np.asarray(r, dtype=float)),
        one_minus_drho=lambda r: -2.0 * np.sinh(0.5 * a * np.asarray(r, dtype=float)) ** 2,
        d3rho0=a * a,
    )


def blend_warp() -> Warp:
    # rho = (r + sinh r)/2: curvature runs from -m(m-1)/2 at the origin to -m(m-1) at infinity
    return Warp(
        name="blend",
        rho=lambda r: 0.5 * (np.asarray(r, dtype=float) + np.sinh(r)),
        drho=lambda r: 0.5 * (1.0 + np.cosh(np.asarray(r, dtype=float))),
        d2rho=lambda r: 0.5 * np.sinh(np.asarray(r, dtype=float)),
        one_minus_drho=lambda r: -np.sinh(0.5 * np.asarray(r, dtype=float)) ** 2,
        d3rho0=0.5,
    )


WARP_PRESETS: dict[str, Callable[[], Warp]] = {
    "linear": linear_warp,
    "sinh": sinh_warp,
    "blend": blend_warp,
}

# radii used to validate custom warps at construction time
_DEFAULT_SAMPLE = np.linspace(0.0, 20.0, 2001)


@dataclass(frozen=True)
class BackgroundManifold:
    dimension: int
    warp: Warp
    kind: str  # "euclidean" | "hyperbolic" | "custom"
    r_hi: float
    r_lo: float
    curvature_scale: float = 1.0
    # user-declared lower bound for the Yamabe invariant of a custom warp (not certified)
    yamabe_lower: float | None = None

    def __post_init__(self):
        _check_dimension(self.dimension)
        if not (0.0 <= self.r_lo <= self.r_hi < math.inf):
            raise InadmissibleBackground(
                f"curvature bounds must satisfy 0 <= r_lo <= r_hi < inf, got r_lo={self.r_lo}, r_hi={self.r_hi}"
            )
        if self.kind == "custom":
            self.validate(_DEFAULT_SAMPLE)

    @property
    def m(self) -> int:
        return self.dimension

    def validate(self, radii) -> None:
        """Reject the warp unless it is admissible and within the declared bounds at ``radii``."""
        r = np.asarray(radii, dtype=float)
        w = self.warp
        if abs(float(w.rho(np.array([0.0]))[0])) > 1e-14 or abs(float(w.drho(np.array([0.0]))[0]) - 1.0) > 1e-12:
            raise InadmissibleBackground(f"warp {w.name!r} must satisfy rho(0)=0 and rho'(0)=1")
        pos = r[r > 0]
        if np.any(~(w.rho(pos) > 0)):
            raise InadmissibleBackground(f"warp {w.name!r} is not positive for r > 0")
        R = background_scalar_curvature(self, r)
        tol = 1e-9 * max(1.0, self.r_hi)
        if np.any(R < -self.r_hi - tol) or np.any(R > -self.r_lo + tol):
            raise InadmissibleBackground(
                f"warp {w.name!r}: curvature range [{R.min():.6g}, {R.max():.6g}] "
                f"outside declared [{-self.r_hi:.6g}, {-self.r_lo:.6g}]"
            )

    def curvature(self, r):
        return background_scalar_curvature(self, r)

    def density(self, r):
        return volume_density(self, r)


def euclidean(m: int) -> BackgroundManifold:
    return BackgroundManifold(dimension=_check_dimension(m), warp=linear_warp(), kind="euclidean", r_hi=0.0, r_lo=0.0)


def hyperbolic(m: int, scale: float = 1.0) -> BackgroundManifold:
    m = _check_dimension(m)
    bound = m * (m - 1) * scale * scale
    return BackgroundManifold(
        dimension=m, warp=sinh_warp(scale), kind="hyperbolic", r_hi=bound, r_lo=bound, curvature_scale=scale
    )


def custom(m: int, preset: str, r_hi: float, r_lo: float, yamabe_lower: float | None = None) -> BackgroundManifold:
    if preset not in WARP_PRESETS:
        raise InadmissibleBackground(f"unknown warp preset {preset!r}; choose from {sorted(WARP_PRESETS)}")
    return BackgroundManifold(
        dimension=_check_dimension(m),
        warp=WARP_PRESETS[preset](),
        kind="custom",
        r_hi=float(r_hi),
        r_lo=float(r_lo),
        yamabe_lower=yamabe_lower,
    )


def background_scalar_curvature(bg: BackgroundManifold, r):
    """Scalar curvature of the warped product at radius ``r`` (scalar or array).

    R = -2(m-1) rho''/rho + (m-1)(m-2)(1 - rho'^2)/rho^2, with the smooth limit
    -m(m-1) rho'''(0) at the origin.
    """
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    m, w = bg.dimension, bg.warp
    out = np.empty_like(r)
    # below 1e-100 rho^2 underflows; the smooth limit is exact to O(r^2) there
    at0 = r < 1e-100
    out[at0] = -m * (m - 1) * w.d3rho0
    rp = r[~at0]
    if rp.size:
        rho = w.rho(rp)
        one_minus = w.one_minus_drho(rp)
        out[~at0] = -2 * (m - 1) * w.d2rho(rp) / rho + (m - 1) * (m - 2) * one_minus * (2.0 - one_minus) / rho**2
    if not np.all(np.isfinite(out)):
        raise InadmissibleBackground(f"warp {w.name!r} gives non-finite curvature")
    return float(out[0]) if scalar else out


def volume_density(bg: BackgroundManifold, r):
    """Radial area element |S^{m-1}| rho(r)^{m-1}."""
    m = bg.dimension
    return SPHERE_AREA[m] * bg.warp.rho(np.asarray(r, dtype=float)) ** (m - 1)
