"""Exhaustion over nested balls: how far the solution on B_r0 moves as k grows."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .background import BackgroundManifold
from .flow import NEWTON_TOL, DomainProblem, FlowTrajectory, RunFailure, run_domain
from .initial import InitialDataSpec

# d_k is compared against balls strictly inside the cutoff band [k-1, k] plus a
# margin of three units
MIN_GAP = 4


@dataclass
class ExhaustionReport:
    r0: float
    k_ref: int
    ks: list[int]
    distances: dict[int, float]  # d_k for every k < k_ref that ran
    failures: dict[int, str] = field(default_factory=dict)
    slack: float = NEWTON_TOL

    @property
    def monotone(self) -> bool:
        """d_k non-increasing in k (up to ``slack``) over the k that ran."""
        d = [self.distances[k] for k in sorted(self.distances)]
        return all(b <= a + self.slack for a, b in zip(d, d[1:]))

    def ratio(self, k_small: int, k_large: int) -> float:
        return self.distances[k_large] / self.distances[k_small] if self.distances[k_small] > 0 else 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["distances"] = {str(k): v for k, v in self.distances.items()}
        out["failures"] = {str(k): v for k, v in self.failures.items()}
        out["monotone"] = self.monotone
        return out


def check_exhaustion_radii(ks: Iterable[int], r0: float) -> None:
    bad = [k for k in ks if k < r0 + MIN_GAP]
    if bad:
        raise ValueError(f"k too small for r0: k={bad} with r0={r0} (need k >= r0 + {MIN_GAP})")


def exhaustion_report(
    trajectories: dict[int, FlowTrajectory | BaseException], r0: float, k_ref: int | None = None
) -> ExhaustionReport:
    """d_k = max over common stored times and nodes in B_r0 of |u_k - u_ref|.

    All runs must share dt and the node spacing near the origin, so that the
    nodes of B_r0 and the stored times coincide.
    """
    ks = sorted(trajectories)
    k_ref = ks[-1] if k_ref is None else k_ref
    check_exhaustion_radii(ks, r0)
    failures = {k: str(v) for k, v in trajectories.items() if isinstance(v, BaseException)}
    report = ExhaustionReport(r0=float(r0), k_ref=int(k_ref), ks=[int(k) for k in ks], distances={}, failures=failures)
    ref = trajectories[k_ref]
    if isinstance(ref, BaseException):
        return report
    report.slack = ref.problem.newton_tol
    n_in = int(np.searchsorted(ref.grid.nodes, r0, side="right"))
    for k in ks:
        tr = trajectories[k]
        if k == k_ref or isinstance(tr, BaseException):
            continue
        if len(tr.times) != len(ref.times) or not np.array_equal(tr.times, ref.times):
            raise ValueError(f"run k={k} does not share the reference time levels")
        if not np.allclose(tr.grid.nodes[:n_in], ref.grid.nodes[:n_in], rtol=0, atol=1e-12):
            raise ValueError(f"run k={k} does not share the reference nodes in B_r0")
        diff = np.abs(tr.states[:, :n_in] - ref.states[:, :n_in])
        report.distances[int(k)] = float(diff.max())
    return report


def run_exhaustion(
    bg: BackgroundManifold,
    init: InitialDataSpec,
    k_list: Iterable[int],
    T: float,
    r0: float = 2.0,
    dt: float | None = None,
    h: float = 1.0 / 64,
    map_fn: Callable = map,
    **solver,
) -> tuple[dict[int, FlowTrajectory | RunFailure], ExhaustionReport]:
    """Solve on B_k for every k and tabulate d_k against the largest k.

    A failed run is recorded in the report and does not stop the others.
    ``map_fn`` may be an executor's ``map`` to run the k in parallel.
    """
    ks = sorted(int(k) for k in k_list)
    if len(ks) < 2 or len(set(ks)) != len(ks):
        raise ValueError("k_list needs at least two distinct radii")
    check_exhaustion_radii(ks, r0)
    problems = [DomainProblem.build(bg, init, k, T, dt=dt, h=h, **solver) for k in ks]
    results = list(map_fn(_run_or_failure, problems))
    trajectories = dict(zip(ks, results))
    return trajectories, exhaustion_report(trajectories, r0)


def _run_or_failure(problem: DomainProblem) -> FlowTrajectory | RunFailure:
    try:
        return run_domain(problem)
    except RunFailure as exc:
        return exc
