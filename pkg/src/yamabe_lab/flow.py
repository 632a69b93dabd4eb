"""Yamabe flow of the conformal factor on a ball B_k with moving Dirichlet data.

The unknown is u with g(t) = u(., t) g_M.  On B_k it solves

    u_t = -R_M + (m-1) [ Lap u / u + (m-6)/4 |grad u|^2 / u^2 ]

with u = u_lo - t R_M on r = k and the truncated initial data
(1 - phi) u_lo + phi u0, phi a smooth cutoff equal to 1 on B_{k-1}.
Time stepping is implicit Euler; each step is a Newton solve with the exact
tridiagonal Jacobian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_banded

from .background import BackgroundManifold, volume_density
from .grid import ConformalField, RadialGrid, laplace_beltrami_radial, radial_gradient_sq
from .initial import InitialDataSpec

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 25
MAX_HALVINGS = 8
DEFAULT_STEPS = 512


class PositivityError(ValueError):
    pass


class StepFailure(RuntimeError):
    def __init__(self, message, residual=np.inf, state=None):
        super().__init__(message)
        self.residual = residual
        self.state = state


class RunFailure(RuntimeError):
    def __init__(self, message, time, state, residual=np.inf):
        super().__init__(message)
        self.time = time
        self.state = state
        self.residual = residual

    def dump(self) -> dict:
        s = self.state
        return {
            "message": str(self),
            "time": float(self.time),
            "last_residual": float(self.residual),
            "state_min": float(np.min(s)) if s is not None else None,
            "state_max": float(np.max(s)) if s is not None else None,
            "state": [float(x) for x in s] if s is not None else None,
        }


def transition(s):
    """Smooth step from 1 (s <= 0) to 0 (s >= 1); equals 1/2 at s = 1/2."""
    s = np.asarray(s, dtype=float)
    out = np.where(s <= 0.0, 1.0, 0.0)
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    expo = np.minimum(1.0 / (1.0 - sm) - 1.0 / sm, 700.0)
    out[mid] = 1.0 / (1.0 + np.exp(expo))
    return out


def cutoff(r, inner: float, outer: float):
    if not 0 < inner < outer:
        raise ValueError(f"cutoff needs 0 < inner < outer, got inner={inner}, outer={outer}")
    return transition((np.asarray(r, dtype=float) - inner) / (outer - inner))


def build_cutoff(grid: RadialGrid, inner: float, outer: float) -> ConformalField:
    return ConformalField(grid, cutoff(grid.nodes, inner, outer))


def truncate_initial_data(u0: ConformalField, u_lo: float, inner: float, outer: float) -> ConformalField:
    phi = cutoff(u0.grid.nodes, inner, outer)
    return ConformalField(u0.grid, (1.0 - phi) * u_lo + phi * u0.values, "conformal-factor")


def boundary_value(bg: BackgroundManifold, u_lo: float, t: float, radius: float) -> float:
    return u_lo - t * bg.curvature(float(radius))


def pde_rhs(u: ConformalField, bg: BackgroundManifold) -> ConformalField:
    """du/dt at every node (one-sided stencils at r = k, where the solver uses Dirichlet data)."""
    v = u.values
    if not np.all(v > 0):
        raise PositivityError("conformal factor must be positive to evaluate the flow")
    m = bg.dimension
    lap = laplace_beltrami_radial(u, bg).values
    grad2 = radial_gradient_sq(u, bg).values
    rhs = -bg.curvature(u.grid.nodes) + (m - 1) * (lap / v + (m - 6) / 4 * grad2 / v**2)
    return ConformalField(u.grid, rhs)


@dataclass
class DomainProblem:
    bg: BackgroundManifold
    init: InitialDataSpec
    k: float
    grid: RadialGrid
    T: float
    dt: float
    newton_tol: float = NEWTON_TOL
    newton_max_iter: int = NEWTON_MAX_ITER
    max_halvings: int = MAX_HALVINGS
    u0_truncated: ConformalField = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 5:
            raise ValueError(f"domain radius k must be >= 5, got {self.k}")
        if self.grid.k != self.k:
            raise ValueError("grid radius does not match k")
        if not (self.T > 0 and self.dt > 0):
            raise ValueError("T and dt must be positive")
        self.bg.validate(self.grid.nodes)
        u0 = ConformalField(self.grid, self.init.evaluate(self.grid.nodes), "conformal-factor")
        self.u0_truncated = truncate_initial_data(u0, self.init.u_lo, self.cutoff_inner, self.cutoff_outer)

    @classmethod
    def build(
        cls,
        bg: BackgroundManifold,
        init: InitialDataSpec,
        k: float,
        T: float,
        dt: float | None = None,
        h: float = 1.0 / 64,
        spacing: str = "uniform",
        refine_strength: float = 0.5,
        **solver,
    ) -> DomainProblem:
        if spacing == "uniform":
            grid = RadialGrid.uniform(k, h)
        else:
            grid = RadialGrid.refined(k, int(round(k / h)), refine_strength)
        return cls(bg=bg, init=init, k=float(k), grid=grid, T=float(T), dt=float(dt or T / DEFAULT_STEPS), **solver)

    @property
    def cutoff_inner(self) -> float:
        return self.k - 1.0

    @property
    def cutoff_outer(self) -> float:
        return self.k

    @property
    def n_steps(self) -> int:
        # dt is shrunk, if needed, so that an integer number of steps lands on T
        return max(1, int(np.ceil(self.T / self.dt - 1e-9)))

    @cached_property
    def times(self) -> np.ndarray:
        n = self.n_steps
        return np.arange(n + 1) * (self.T / n)

    def boundary(self, t: float) -> float:
        return boundary_value(self.bg, self.init.u_lo, t, self.k)

    @cached_property
    def _operators(self):
        g, bg = self.grid, self.bg
        lap = g.laplacian_bands(bg)
        lo1, di1, up1, _ = g._d1_bands
        d1 = (lo1[:-1].copy(), di1[:-1].copy(), up1[:-1].copy())
        return lap, d1, bg.curvature(g.nodes[:-1])


class StepReport(NamedTuple):
    newton_iterations: int
    residual: float
    positivity_margin: float
    substeps: int


def _apply(bands, u):
    lo, di, up = bands
    out = di * u[:-1] + up * u[1:]
    out[1:] += lo[1:] * u[:-2]
    return out


def _newton(problem: DomainProblem, u_old: np.ndarray, t_new: float, dt: float):
    (lap, d1, Rm) = problem._operators
    m = problem.bg.dimension
    c, q = m - 1.0, (m - 6) / 4
    u = u_old.copy()
    u[-1] = problem.boundary(t_new)
    residual = np.inf
    for it in range(problem.newton_max_iter + 1):
        ui = u[:-1]
        Lu = _apply(lap, u)
        g = _apply(d1, u)
        G = -Rm + c * (Lu / ui + q * g * g / ui**2)
        F = ui - dt * G - u_old[:-1]
        residual = float(np.max(np.abs(F)))
        if not np.isfinite(residual):
            raise StepFailure("non-finite Newton residual", residual, u)
        if residual <= problem.newton_tol:
            return u, it, residual
        if it == problem.newton_max_iter:
            break
        # dG_i/du_j = c [ L_ij/u_i + 2q g_i D_ij/u_i^2 ] - c delta_ij [ Lu_i/u_i^2 + 2q g_i^2/u_i^3 ]
        a = c / ui
        b = 2 * c * q * g / ui**2
        ab = np.zeros((3, len(ui)))
        ab[1] = 1.0 - dt * (a * lap[1] + b * d1[1] - c * (Lu / ui**2 + 2 * q * g * g / ui**3))
        ab[0, 1:] = -dt * (a[:-1] * lap[2][:-1] + b[:-1] * d1[2][:-1])
        ab[2, :-1] = -dt * (a[1:] * lap[0][1:] + b[1:] * d1[0][1:])
        delta = solve_banded((1, 1), ab, F, check_finite=False)
        u[:-1] = ui - delta
        if not np.all(np.isfinite(u)) or np.any(u <= 0):
            raise StepFailure(f"positivity lost in Newton iteration {it + 1}", residual, u)
    raise StepFailure(
        f"Newton did not converge in {problem.newton_max_iter} iterations (residual {residual:.3e})", residual, u
    )


def _advance(problem: DomainProblem, u: np.ndarray, t0: float, t1: float, substeps: int):
    iters, res = 0, 0.0
    for s in range(substeps):
        ta = t0 + (t1 - t0) * s / substeps
        tb = t1 if s == substeps - 1 else t0 + (t1 - t0) * (s + 1) / substeps
        u, it, r = _newton(problem, u, tb, tb - ta)
        iters += it
        res = max(res, r)
    return u, iters, res


def step_flow(u: ConformalField, t: float, dt: float, problem: DomainProblem) -> ConformalField:
    """One implicit Euler step from t to t + dt; raises StepFailure on Newton failure."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not np.all(u.values > 0):
        raise PositivityError("step_flow needs a positive state")
    v, _, _ = _advance(problem, np.array(u.values), t, t + dt, 1)
    return ConformalField(u.grid, v, "conformal-factor")


@dataclass(eq=False)
class FlowTrajectory:
    problem: DomainProblem
    times: np.ndarray
    states: np.ndarray  # shape (len(times), n_nodes)
    step_reports: list[StepReport]

    @property
    def grid(self) -> RadialGrid:
        return self.problem.grid

    @property
    def bg(self) -> BackgroundManifold:
        return self.problem.bg

    def state(self, j: int) -> ConformalField:
        return ConformalField(self.grid, self.states[j], "conformal-factor")

    def index_of(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, self.times[-1]):
            raise ValueError(f"time {t} is not a stored time of the trajectory")
        return j


def run_domain(problem: DomainProblem) -> FlowTrajectory:
    """March from t = 0 to T; a failed step is retried with 2, 4, ... 2^8 substeps."""
    times = problem.times
    states = np.empty((len(times), len(problem.grid.nodes)))
    states[0] = problem.u0_truncated.values
    reports: list[StepReport] = []
    u = states[0].copy()
    for j in range(len(times) - 1):
        last: StepFailure | None = None
        for halvings in range(problem.max_halvings + 1):
            try:
                u_new, iters, res = _advance(problem, u, times[j], times[j + 1], 2**halvings)
                break
            except StepFailure as exc:
                last = exc
                log.debug("step %d failed with %d substeps: %s", j, 2**halvings, exc)
        else:
            raise RunFailure(
                f"step {j} at t={times[j]:.6g} failed after {problem.max_halvings} halvings: {last}",
                times[j],
                u,
                last.residual,
            )
        u = u_new
        states[j + 1] = u
        reports.append(StepReport(iters, res, float(u.min()), 2**halvings))
    return FlowTrajectory(problem, times.copy(), states, reports)


class FormResidual(NamedTuple):
    power_form: float
    divergence_form: float


def _cell_volumes(grid: RadialGrid, bg: BackgroundManifold):
    """Integral of rho^{m-1} over the dual cells [r_{i-1/2}, r_{i+1/2}] of nodes 0..n-1."""
    r = grid.nodes
    half = 0.5 * (r[:-1] + r[1:])
    left = np.concatenate([[0.0], half[:-1]])
    right = half
    x, w = np.polynomial.legendre.leggauss(6)
    mid, rad = 0.5 * (left + right), 0.5 * (right - left)
    pts = mid[:, None] + rad[:, None] * x[None, :]
    m = bg.dimension
    return (rad[:, None] * w[None, :] * bg.warp.rho(pts) ** (m - 1)).sum(axis=1), half


def sample_indices(traj: FlowTrajectory, times=None) -> np.ndarray:
    """Indices of interior stored times; ``times`` selects a subset (must be stored times)."""
    if len(traj.times) < 3:
        raise ValueError("need at least three time levels")
    if times is None:
        return np.arange(1, len(traj.times) - 1)
    idx = np.array([traj.index_of(t) for t in np.atleast_1d(times)], dtype=int)
    if np.any(idx < 1) or np.any(idx > len(traj.times) - 2):
        raise ValueError("sample times must be interior stored times")
    return idx


def u_power_form_residual(traj: FlowTrajectory, times=None, node_stride: int = 1) -> FormResidual:
    """Max residuals of the U = u^eta power form and of its divergence form.

    power form:       U^{1+1/eta}_t / (eta+1) = -R_M U + (m-1)/eta Lap U
    divergence form:  (u^{eta+1})_t / (m-1) = -(eta+1) R_M u^eta / (m-1) + div(u^{-1} grad u^{eta+1})

    Time derivatives are central differences at interior times (or at
    ``times``); nodes are 0..n-1 (the Dirichlet node is excluded), every
    ``node_stride``-th one, so that refinement levels compare the same points.
    """
    bg, g = traj.bg, traj.grid
    m = bg.dimension
    eta = (m - 2) / 4
    t, S = traj.times, traj.states
    W = S ** (eta + 1)
    Rm = bg.curvature(g.nodes)
    vols, half = _cell_volumes(g, bg)
    area_half = bg.warp.rho(half) ** (m - 1)
    dr = np.diff(g.nodes)
    power, div = 0.0, 0.0
    for j in sample_indices(traj, times):
        dW = (W[j + 1] - W[j - 1]) / (t[j + 1] - t[j - 1])
        u = S[j]
        U = u**eta
        lapU = laplace_beltrami_radial(ConformalField(g, U), bg).values
        res = dW / (eta + 1) - (-Rm * U + (m - 1) / eta * lapU)
        power = max(power, float(np.max(np.abs(res[:-1][::node_stride]))))

        flux = area_half * (W[j, 1:] - W[j, :-1]) / dr / (0.5 * (u[1:] + u[:-1]))
        inflow = np.concatenate([[0.0], flux[:-1]])
        divergence = (flux - inflow) / vols
        rhs = -(eta + 1) * Rm[:-1] * u[:-1] ** eta / (m - 1) + divergence
        res_d = dW[:-1] / (m - 1) - rhs
        div = max(div, float(np.max(np.abs(res_d[::node_stride]))))
    return FormResidual(power, div)


def homothetic_solution(bg: BackgroundManifold, c: float, t):
    """u(t) = c - R_M t for spatially constant data on a constant-curvature background."""
    return c - np.asarray(t, dtype=float) * bg.curvature(0.0)
