"""Radial grids on [0, k] and finite-difference operators for radial functions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import simpson, trapezoid

from .background import BackgroundManifold, volume_density

MIN_INTERVALS = 16
ROLES = ("conformal-factor", "curvature", "test-function", "generic")


class DomainError(ValueError):
    pass


def fd_weights(x0: float, xs, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at ``x0`` (Fornberg 1988)."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for s in range(mn, 0, -1):
                    c[i, s] = c1 * (s * c[i - 1, s - 1] - c5 * c[i - 1, s]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for s in range(mn, 0, -1):
                c[j, s] = (c4 * c[j, s] - s * c[j, s - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


@dataclass(frozen=True, eq=False)
class RadialGrid:
    k: float
    nodes: np.ndarray
    spacing_policy: str = "uniform"

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", r)
        r.flags.writeable = False
        if r.ndim != 1 or len(r) < MIN_INTERVALS + 1:
            raise DomainError(f"a radial grid needs at least {MIN_INTERVALS} intervals")
        if r[0] != 0.0 or r[-1] != self.k:
            raise DomainError("grid must start at r=0 and end exactly at r=k")
        if np.any(np.diff(r) <= 0):
            raise DomainError("grid nodes must be strictly increasing")
        if self.h > self.k / MIN_INTERVALS * (1 + 1e-12):
            raise DomainError(f"max spacing {self.h} exceeds k/{MIN_INTERVALS}")

    @classmethod
    def uniform(cls, k: float, h: float = 1.0 / 64) -> RadialGrid:
        n = int(round(k / h))
        if abs(n * h - k) > 1e-9 * k:
            raise DomainError(f"spacing h={h} does not divide k={k}")
        nodes = np.arange(n + 1) * (k / n)
        nodes[-1] = k
        return cls(k=float(k), nodes=nodes, spacing_policy="uniform")

    @classmethod
    def refined(cls, k: float, n: int, strength: float = 0.5) -> RadialGrid:
        """Nodes r = k(xi + c sin(pi xi)/pi): spacing shrinks smoothly towards r = k.

        The boundary spacing is (1-c)/(1+c) times the spacing at the origin; the
        map is odd in xi so radial functions stay smooth through the origin.
        """
        if not 0.0 <= strength < 1.0:
            raise DomainError("refinement strength must lie in [0, 1)")
        xi = np.linspace(0.0, 1.0, n + 1)
        nodes = k * (xi + strength * np.sin(np.pi * xi) / np.pi)
        nodes[0], nodes[-1] = 0.0, k
        return cls(k=float(k), nodes=nodes, spacing_policy="geometric-refinement-near-boundary")

    @property
    def n(self) -> int:
        """Number of intervals."""
        return len(self.nodes) - 1

    @cached_property
    def h(self) -> float:
        return float(np.max(np.diff(self.nodes)))

    @cached_property
    def is_uniform(self) -> bool:
        d = np.diff(self.nodes)
        return bool(np.allclose(d, d[0], rtol=1e-12, atol=0.0))

    @cached_property
    def _d1_bands(self):
        # rows 1..n-1: three-point central weights; row 0 is zero by symmetry
        r = self.nodes
        lo, di, up = np.zeros(len(r)), np.zeros(len(r)), np.zeros(len(r))
        hm = r[1:-1] - r[:-2]
        hp = r[2:] - r[1:-1]
        lo[1:-1] = -hp / (hm * (hm + hp))
        di[1:-1] = (hp - hm) / (hm * hp)
        up[1:-1] = hm / (hp * (hm + hp))
        end = fd_weights(r[-1], r[-3:], 1)
        return lo, di, up, end

    @cached_property
    def _d2_bands(self):
        r = self.nodes
        lo, di, up = np.zeros(len(r)), np.zeros(len(r)), np.zeros(len(r))
        hm = r[1:-1] - r[:-2]
        hp = r[2:] - r[1:-1]
        lo[1:-1] = 2.0 / (hm * (hm + hp))
        di[1:-1] = -2.0 / (hm * hp)
        up[1:-1] = 2.0 / (hp * (hm + hp))
        # even reflection f(-r1) = f(r1) at the origin
        di[0] = -2.0 / r[1] ** 2
        up[0] = 2.0 / r[1] ** 2
        end = fd_weights(r[-1], r[-4:], 2)
        return lo, di, up, end

    def derivative(self, f) -> np.ndarray:
        """f' with f'(0) = 0, central in the interior and one-sided at r = k."""
        f = np.asarray(f, dtype=float)
        lo, di, up, end = self._d1_bands
        out = np.zeros_like(f)
        out[1:-1] = lo[1:-1] * f[:-2] + di[1:-1] * f[1:-1] + up[1:-1] * f[2:]
        out[-1] = end @ f[-3:]
        return out

    def second_derivative(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        lo, di, up, end = self._d2_bands
        out = np.empty_like(f)
        out[0] = di[0] * f[0] + up[0] * f[1]
        out[1:-1] = lo[1:-1] * f[:-2] + di[1:-1] * f[1:-1] + up[1:-1] * f[2:]
        out[-1] = end @ f[-4:]
        return out

    def laplacian_bands(self, bg: BackgroundManifold):
        """Tridiagonal (lower, diag, upper) of the radial Laplacian for rows 0..n-1.

        Row i couples nodes i-1, i, i+1; ``lower[0]`` is unused.  The boundary
        row is not included because the solver imposes Dirichlet data there.
        """
        m = bg.dimension
        r = self.nodes
        lo1, di1, up1, _ = self._d1_bands
        lo2, di2, up2, _ = self._d2_bands
        c = np.zeros(len(r))
        c[1:-1] = (m - 1) * bg.warp.drho(r[1:-1]) / bg.warp.rho(r[1:-1])
        lo = lo2 + c * lo1
        di = di2 + c * di1
        up = up2 + c * up1
        di[0] = m * di2[0]
        up[0] = m * up2[0]
        return lo[:-1].copy(), di[:-1].copy(), up[:-1].copy()

    def refine(self) -> RadialGrid:
        """Grid with every interval bisected (same policy)."""
        r = self.nodes
        if self.spacing_policy == "uniform":
            return RadialGrid.uniform(self.k, (r[1] - r[0]) / 2)
        fine = np.empty(2 * len(r) - 1)
        fine[::2] = r
        fine[1::2] = 0.5 * (r[:-1] + r[1:])
        return RadialGrid(k=self.k, nodes=fine, spacing_policy=self.spacing_policy)


@dataclass(frozen=True, eq=False)
class ConformalField:
    grid: RadialGrid
    values: np.ndarray
    role: str = "generic"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if v.shape != self.grid.nodes.shape:
            raise ValueError(f"field has {v.shape} values on a grid of {self.grid.nodes.shape} nodes")
        if self.role not in ROLES:
            raise ValueError(f"unknown field role {self.role!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if self.role == "conformal-factor" and not np.all(v > 0):
            raise ValueError("a conformal factor must be positive at every node")

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    @classmethod
    def from_function(cls, grid: RadialGrid, fn, role: str = "generic") -> ConformalField:
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float) * np.ones_like(grid.nodes), role)


def radial_gradient_sq(f: ConformalField, bg: BackgroundManifold | None = None) -> ConformalField:
    """|grad f|^2 = (f')^2 with respect to the background metric."""
    return ConformalField(f.grid, f.grid.derivative(f.values) ** 2)


def laplace_beltrami_radial(f: ConformalField, bg: BackgroundManifold) -> ConformalField:
    """f'' + (m-1)(rho'/rho) f', with m f''(0) at the origin."""
    g, m, r = f.grid, bg.dimension, f.grid.nodes
    d2 = g.second_derivative(f.values)
    d1 = g.derivative(f.values)
    out = np.empty_like(d2)
    out[0] = m * d2[0]
    out[1:] = d2[1:] + (m - 1) * bg.warp.drho(r[1:]) / bg.warp.rho(r[1:]) * d1[1:]
    return ConformalField(g, out)


def integrate_radial(
    f: ConformalField, weight: ConformalField | None, bg: BackgroundManifold, r_max: float
) -> float:
    """Integral of f over the ball B_{r_max}, against u^{m/2} dmu_M when a weight u is given."""
    g = f.grid
    r = g.nodes
    if r_max < 0 or r_max > g.k * (1 + 1e-12):
        raise DomainError(f"r_max={r_max} outside the grid [0, {g.k}]")
    vals = f.values * volume_density(bg, r)
    if weight is not None:
        if not np.all(weight.values > 0):
            raise ValueError("weight must be a positive conformal factor")
        vals = vals * weight.values ** (bg.dimension / 2)
    j = int(np.searchsorted(r, r_max, side="right")) - 1
    j = min(j, len(r) - 1)
    if g.is_uniform and j >= 2:
        # Simpson on an even number of cells (all weights positive), trapezoid on a leftover cell
        e = j - j % 2
        head = float(simpson(vals[: e + 1], x=r[: e + 1]))
        if e < j:
            head += 0.5 * (vals[e] + vals[j]) * (r[j] - r[e])
    else:
        head = float(trapezoid(vals[: j + 1], r[: j + 1])) if j > 0 else 0.0
    if np.isclose(r[j], r_max, rtol=0, atol=1e-12 * max(1.0, g.k)):
        return head
    # r_max between nodes j and j+1: trapezoid over the partial cell, end value interpolated linearly
    theta = (r_max - r[j]) / (r[j + 1] - r[j])
    end = (1 - theta) * vals[j] + theta * vals[j + 1]
    return head + 0.5 * (vals[j] + end) * (r_max - r[j])
