"""Curvature fields and checks of the flow's quantitative bounds.

Every check returns a small report with a margin; a check passes when its
margin is at least ``-eps`` for a discretization tolerance ``eps`` that is
measured by comparing a run with the same run at half resolution
(``calibrate_tolerance``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .background import BackgroundManifold, yamabe_invariant_model
from .flow import DomainProblem, FlowTrajectory, run_domain, cutoff, sample_indices, u_power_form_residual
from .grid import ConformalField, RadialGrid, integrate_radial, laplace_beltrami_radial, radial_gradient_sq

CALIBRATION_FACTOR = 10.0
SOBOLEV_RTOL = 1e-8


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CurvatureField:
    grid: RadialGrid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("curvature must be finite at every node")


def scalar_curvature_conformal(u: ConformalField, bg: BackgroundManifold, t: float = 0.0) -> CurvatureField:
    """R_g for g = u g_M: U^{-(m+2)/(m-2)} (R_M U - 4(m-1)/(m-2) Lap U), U = u^{(m-2)/4}."""
    if not np.all(u.values > 0):
        raise ValueError("conformal factor must be positive")
    m = bg.dimension
    U = u.values ** ((m - 2) / 4)
    lapU = laplace_beltrami_radial(ConformalField(u.grid, U), bg).values
    R = U ** (-(m + 2) / (m - 2)) * (bg.curvature(u.grid.nodes) * U - 4 * (m - 1) / (m - 2) * lapU)
    return CurvatureField(u.grid, R, t)


def boundary_curvature(traj: FlowTrajectory) -> np.ndarray:
    """-(1/phi) dphi/dt for the boundary data phi = u_lo - t R_M(k), at every stored time."""
    p = traj.problem
    Rk = p.bg.curvature(p.k)
    return Rk / (p.init.u_lo - traj.times * Rk)


def curvature_history(traj: FlowTrajectory) -> np.ndarray:
    """R_g at every stored time and node; the boundary node uses the exact boundary data."""
    R = np.empty_like(traj.states)
    for j in range(len(traj.times)):
        R[j] = scalar_curvature_conformal(traj.state(j), traj.bg).values
    R[:, -1] = boundary_curvature(traj)
    return R


def curvature_from_time_derivative(traj: FlowTrajectory) -> list[CurvatureField]:
    """R_g = -(1/u) du/dt by central differences, one field per interior time."""
    t, S = traj.times, traj.states
    if len(t) < 3:
        raise ValueError("need at least three time levels")
    dudt = (S[2:] - S[:-2]) / (t[2:] - t[:-2])[:, None]
    R = -dudt / S[1:-1]
    return [CurvatureField(traj.grid, R[i], float(t[i + 1])) for i in range(len(R))]


@dataclass
class SandwichReport:
    lower_margin: float
    upper_margin: float
    eps: float
    passed: bool


def check_sandwich(traj: FlowTrajectory, eps: float = 0.0) -> SandwichReport:
    """Margins of u_lo + r_lo t <= u <= u_hi + r_hi t over all nodes and stored times."""
    p = traj.problem
    t = traj.times[:, None]
    lower = float(np.min(traj.states - (p.init.u_lo + p.bg.r_lo * t)))
    upper = float(np.min(p.init.u_hi + p.bg.r_hi * t - traj.states))
    return SandwichReport(lower, upper, eps, bool(min(lower, upper) >= -eps))


@dataclass
class RLowerReport:
    margin: float  # min of R + 1/t over nodes and stored t > 0
    boundary_sharp_margin: float  # min of R(k,t) + 1/(u_lo/r_hi + t); inf when r_hi = 0
    interior_sharp_margin: float  # min of R + 1/(u_lo/r_hi + t) over all nodes
    interior_sharp_applicable: bool  # R(., 0) >= -r_hi/u_lo, the hypothesis of the sharper bound
    eps: float
    passed: bool


def check_r_lower(traj: FlowTrajectory, eps: float = 0.0, R: np.ndarray | None = None) -> RLowerReport:
    """R_g >= -1/t, plus the sharper -1/(u_lo/r_hi + t) form.

    The sharper bound is certified at the boundary whenever r_hi > 0.  In the
    interior it is only implied when the initial curvature already satisfies
    R(., 0) >= -r_hi/u_lo, so it is asserted only in that case.
    """
    if R is None:
        R = curvature_history(traj)
    p = traj.problem
    t = traj.times
    pos = t > 0
    margin = float(np.min(R[pos] + 1.0 / t[pos][:, None]))
    r_hi, u_lo = p.bg.r_hi, p.init.u_lo
    if r_hi > 0:
        eps0 = u_lo / r_hi
        sharp = R + 1.0 / (eps0 + t)[:, None]
        boundary_sharp = float(np.min(sharp[:, -1]))
        interior_sharp = float(np.min(sharp))
        applicable = bool(np.min(R[0]) >= -1.0 / eps0 - eps)
    else:
        boundary_sharp = interior_sharp = float("inf")
        applicable = False
    passed = margin >= -eps and boundary_sharp >= -eps and (not applicable or interior_sharp >= -eps)
    return RLowerReport(margin, boundary_sharp, interior_sharp, applicable, eps, bool(passed))


def lp_curvature_norm(traj: FlowTrajectory, t: float, r0: float, p: float, part: str, R: np.ndarray | None = None) -> float:
    """Integral of R_+^p (part="plus") or R_-^p (part="minus") over B_{r0} against dmu_g."""
    k = traj.problem.k
    if r0 + 5 > k:
        raise PreconditionError(f"r0={r0} too close to the boundary of B_{k}; need r0 + 5 <= k")
    if p <= 1:
        raise PreconditionError("exponent p must exceed 1")
    if part not in ("plus", "minus"):
        raise ValueError("part must be 'plus' or 'minus'")
    j = traj.index_of(t)
    u = traj.state(j)
    Rj = curvature_history(traj)[j] if R is None else R[j]
    sign = 1.0 if part == "plus" else -1.0
    integrand = ConformalField(traj.grid, np.maximum(0.0, sign * Rj) ** p)
    return integrate_radial(integrand, u, traj.bg, r0)


def evoR_residual(traj: FlowTrajectory, R: np.ndarray | None = None, times=None, node_stride: int = 1) -> float:
    """Max residual of R_t = (m-1) Lap_g R + R^2 at interior times (or ``times``).

    Lap_g = u^{-1} Lap_M + (m-2)/2 u^{-2} <grad u, grad .>.  Nodes 2..n-2 only:
    the origin stencil and the interior stencil have different O(h^2) error
    terms, and applying Lap to R turns that jump into an O(1) error at nodes 0
    and 1; at n-1 the stencil would mix the exact boundary curvature with the
    finite-difference values.  With ``node_stride`` s the sampled nodes are the
    multiples of s in [2s, n-2s]: the nodes 2..n_c-2 of a grid s times coarser.
    """
    if R is None:
        R = curvature_history(traj)
    g, bg = traj.grid, traj.bg
    m = bg.dimension
    t = traj.times
    nodes = np.arange(2 * node_stride, g.n - 2 * node_stride + 1, node_stride)
    worst = 0.0
    for j in sample_indices(traj, times):
        u = traj.states[j]
        dRdt = (R[j + 1] - R[j - 1]) / (t[j + 1] - t[j - 1])
        lapR = laplace_beltrami_radial(ConformalField(g, R[j]), bg).values
        grad_dot = g.derivative(u) * g.derivative(R[j])
        lap_g = lapR / u + (m - 2) / 2 * grad_dot / u**2
        res = dRdt - (m - 1) * lap_g - R[j] ** 2
        worst = max(worst, float(np.max(np.abs(res[nodes]))))
    return worst


@dataclass
class SobolevMargin:
    lhs: float
    rhs: float
    margin: float
    passed: bool


def sobolev_check(
    u: ConformalField, f: ConformalField, bg: BackgroundManifold, r_max: float, yamabe: float | None = None
) -> SobolevMargin:
    """LHS - RHS of  int |grad^g f|^2 dmu_g >= (inf u/sup u)^{(m-2)/2} Y (int |f|^{2m/(m-2)} dmu_g)^{(m-2)/m}."""
    g, r = f.grid, f.grid.nodes
    m = bg.dimension
    if np.any(u.values <= 0):
        raise ValueError("conformal factor must be positive")
    outside = r >= r_max - 1e-12
    scale = float(np.max(np.abs(f.values))) if f.values.size else 0.0
    if np.any(np.abs(f.values[outside]) > 1e-12 * max(scale, 1e-300)) or not np.any(outside):
        raise PreconditionError("test function must vanish at and beyond r_max")
    if yamabe is None:
        if bg.kind in ("euclidean", "hyperbolic"):
            yamabe = yamabe_invariant_model(m)
        elif bg.yamabe_lower is not None:
            yamabe = bg.yamabe_lower
        else:
            raise PreconditionError("custom background has no declared Yamabe lower bound")
    grad2 = radial_gradient_sq(f, bg).values
    lhs = integrate_radial(ConformalField(g, grad2 / u.values), u, bg, r_max)
    power = integrate_radial(ConformalField(g, np.abs(f.values) ** (2 * m / (m - 2))), u, bg, r_max)
    ball = r <= r_max + 1e-12
    ratio = u.values[ball].min() / u.values[ball].max()
    rhs = ratio ** ((m - 2) / 2) * yamabe * power ** ((m - 2) / m)
    margin = lhs - rhs
    return SobolevMargin(lhs, rhs, margin, bool(margin >= -SOBOLEV_RTOL * max(lhs, rhs)))


def truncated_bubble(grid: RadialGrid, m: int, radius: float) -> ConformalField:
    """(1 + r^2)^{-(m-2)/2}, cut off smoothly between radius/2 and radius."""
    r = grid.nodes
    return ConformalField(grid, (1 + r**2) ** (-(m - 2) / 2) * cutoff(r, radius / 2, radius), "test-function")


def random_test_function(grid: RadialGrid, r_max: float, rng: np.random.Generator) -> ConformalField:
    """Random smooth radial function supported in B_{r_max}: a cosine series times a cutoff."""
    r = grid.nodes
    coeffs = rng.normal(size=5) / (1.0 + np.arange(5))
    series = sum(c * np.cos(j * np.pi * r / r_max) for j, c in enumerate(coeffs))
    inner = rng.uniform(0.2, 0.8) * r_max
    return ConformalField(grid, series * cutoff(r, inner, r_max), "test-function")


def random_sobolev_samples(
    bg: BackgroundManifold,
    n: int,
    seed: int,
    r_max: float = 4.0,
    h: float = 1.0 / 64,
    vary_u: bool = False,
) -> list[SobolevMargin]:
    rng = np.random.default_rng(seed)
    grid = RadialGrid.uniform(r_max, h)
    out = []
    for _ in range(n):
        f = random_test_function(grid, r_max, rng)
        if vary_u:
            amp, freq = rng.uniform(0.0, 2.0), rng.uniform(0.5, 6.0)
            uvals = 1.0 + amp * 0.5 * (1.0 + np.cos(freq * grid.nodes))
        else:
            uvals = np.ones_like(grid.nodes)
        out.append(sobolev_check(ConformalField(grid, uvals, "conformal-factor"), f, bg, r_max))
    return out


@dataclass
class DiscTolerance:
    eps_u: float
    eps_R: float


def calibrate_tolerance(
    fine: FlowTrajectory, coarse: FlowTrajectory, R_fine: np.ndarray | None = None, R_coarse: np.ndarray | None = None
) -> DiscTolerance:
    """10x the observed difference between a run and its half-resolution twin."""
    rf, rc = fine.grid.nodes, coarse.grid.nodes
    if len(rf) != 2 * len(rc) - 1 or not np.allclose(rf[::2], rc):
        raise ValueError("coarse grid must be the fine grid with every other node")
    if len(fine.times) != 2 * len(coarse.times) - 1 or not np.allclose(fine.times[::2], coarse.times):
        raise ValueError("coarse times must be every other fine time")
    du = np.max(np.abs(fine.states[::2, ::2] - coarse.states))
    R_fine = curvature_history(fine) if R_fine is None else R_fine
    R_coarse = curvature_history(coarse) if R_coarse is None else R_coarse
    dR = np.max(np.abs(R_fine[::2, ::2] - R_coarse))
    return DiscTolerance(CALIBRATION_FACTOR * float(du), CALIBRATION_FACTOR * float(dR))


@dataclass
class BoundsReport:
    sandwich: SandwichReport
    r_lower: RLowerReport
    lp_table: list[dict] = field(default_factory=list)
    evoR_residual: float = float("nan")
    eps_u: float = 0.0
    eps_R: float = 0.0

    @property
    def sandwich_margin(self) -> float:
        return min(self.sandwich.lower_margin, self.sandwich.upper_margin)

    @property
    def r_lower_margin(self) -> float:
        return self.r_lower.margin

    def to_dict(self) -> dict:
        return asdict(self)


def bounds_report(
    traj: FlowTrajectory,
    tol: DiscTolerance | None = None,
    r0s=(),
    ps=(),
    times=(),
    R: np.ndarray | None = None,
) -> BoundsReport:
    tol = tol or DiscTolerance(0.0, 0.0)
    R = curvature_history(traj) if R is None else R
    k = traj.problem.k
    rows = []
    for t in times:
        for p in ps:
            for r0 in r0s:
                for part in ("plus", "minus"):
                    rows.append(
                        {"k": k, "t": float(t), "p": float(p), "r0": float(r0), "part": part,
                         "value": lp_curvature_norm(traj, t, r0, p, part, R=R)}
                    )
    return BoundsReport(
        sandwich=check_sandwich(traj, tol.eps_u),
        r_lower=check_r_lower(traj, tol.eps_R, R=R),
        lp_table=rows,
        evoR_residual=evoR_residual(traj, R=R) if len(traj.times) >= 3 else float("nan"),
        eps_u=tol.eps_u,
        eps_R=tol.eps_R,
    )


@dataclass
class RefinementStudy:
    """Residuals under simultaneous (h, dt) halving, sampled at common points.

    Sample times are the coarsest level's interior times in [t_min, T); sample
    nodes are the coarsest grid's nodes.  Skipping the initial layer keeps the
    comparison in the asymptotic regime: close to t = 0 the truncated data
    relaxes quickly and higher-order time-error terms are large.
    """

    h: list[float]
    dt: list[float]
    power_form: list[float]
    divergence_form: list[float]
    evoR: list[float]

    @staticmethod
    def _orders(values) -> list[float]:
        v = np.asarray(values, dtype=float)
        return [float(x) for x in np.log2(v[:-1] / v[1:])]

    @property
    def orders(self) -> dict[str, list[float]]:
        return {
            "power_form": self._orders(self.power_form),
            "divergence_form": self._orders(self.divergence_form),
            "evoR": self._orders(self.evoR),
        }

    def to_dict(self) -> dict:
        return {**asdict(self), "orders": self.orders}


def refinement_study(
    bg: BackgroundManifold,
    init,
    k: float,
    T: float,
    h0: float,
    dt0: float,
    levels: int = 3,
    t_min: float | None = None,
    **solver,
) -> RefinementStudy:
    if levels < 2:
        raise ValueError("a refinement study needs at least two levels")
    t_min = T / 4 if t_min is None else t_min
    n0 = int(round(T / dt0))
    coarse_times = np.arange(1, n0) * (T / n0)
    sample = coarse_times[coarse_times >= t_min - 1e-12 * T]
    if len(sample) == 0:
        raise ValueError("no coarse interior time lies in [t_min, T)")
    out = RefinementStudy([], [], [], [], [])
    for level in range(levels):
        s = 2**level
        prob = DomainProblem.build(bg, init, k, T, dt=dt0 / s, h=h0 / s, **solver)
        traj = run_domain(prob)
        forms = u_power_form_residual(traj, times=sample, node_stride=s)
        out.h.append(h0 / s)
        out.dt.append(dt0 / s)
        out.power_form.append(forms.power_form)
        out.divergence_form.append(forms.divergence_form)
        out.evoR.append(evoR_residual(traj, times=sample, node_stride=s))
    return out
