"""Batch execution of scenarios and the files a batch leaves on disk.

Per scenario, in ``<out>/<name>/``:
    traj_k<k>.csv       t, r, u, R_g   (every ``output_stride``-th stored time, plus T)
    bounds_k<k>.json    BoundsReport
    lp_table.csv        k, t, p, r0, part, value
    exhaustion.json     ExhaustionReport (when enabled)
    failure_k<k>.json   state dump of a failed run
    run_report.json     every executed check with outcome pass | fail | error
In ``<out>/``: summary.json, and timings.json (wall-clock times are kept out of
the reports so that repeated runs give byte-identical JSON).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import BUILTINS, Scenario, builtin_scenarios
from .diagnostics import (
    BoundsReport,
    DiscTolerance,
    bounds_report,
    calibrate_tolerance,
    curvature_history,
    random_sobolev_samples,
)
from .exhaustion import exhaustion_report
from .flow import DomainProblem, FlowTrajectory, RunFailure, StepReport, homothetic_solution, run_domain

log = logging.getLogger(__name__)

OUT_ENV = "YAMABE_LAB_OUT"
DEFAULT_OUT = "yamabe_out"
ORACLE_U_TOL = 1e-6
ORACLE_R_RTOL = 1e-5
LP_BAND = 0.10
# margins that are pure round-off may differ in sign between resolutions
ROUNDOFF = 64 * np.finfo(float).eps

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


@dataclass
class CheckOutcome:
    check: str
    k: int | None
    outcome: str  # pass | fail | error
    margin: float | None = None
    detail: str = ""


@dataclass
class RunReport:
    scenario: str
    checks: list[CheckOutcome] = field(default_factory=list)
    tolerances: dict[str, dict[str, float]] = field(default_factory=dict)
    exhaustion: dict | None = None
    config: dict = field(default_factory=dict)

    def add(self, check: str, k, outcome, margin=None, detail: str = "") -> None:
        if isinstance(outcome, (bool, np.bool_)):
            outcome = "pass" if outcome else "fail"
        self.checks.append(CheckOutcome(check, None if k is None else int(k), outcome, margin, detail))

    @property
    def status(self) -> str:
        outcomes = {c.outcome for c in self.checks}
        return "error" if "error" in outcomes else "fail" if "fail" in outcomes else "pass"

    def to_dict(self) -> dict:
        return {**asdict(self), "status": self.status}


@dataclass
class BatchResult:
    reports: list[RunReport]
    out_dir: Path

    @property
    def exit_code(self) -> int:
        statuses = {r.status for r in self.reports}
        if "error" in statuses:
            return EXIT_ERROR
        return EXIT_FAIL if "fail" in statuses else EXIT_PASS


def _json(obj) -> str:
    def plain(o):
        if isinstance(o, dict):
            return {str(k): plain(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [plain(v) for v in o]
        if isinstance(o, np.generic):
            return o.item()
        return o

    return json.dumps(plain(obj), indent=2, sort_keys=True) + "\n"


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _problem(s: Scenario, k: int, level: int) -> DomainProblem:
    r = s.run
    return DomainProblem.build(
        s.background.build(), s.initial, k, r.T, dt=r.dt * 2**level, h=r.h * 2**level,
        spacing=r.spacing, refine_strength=r.refine_strength, **r.solver(),
    )


def _solve(s: Scenario, k: int, level: int):
    """Worker: plain arrays only, since warps hold closures that do not pickle."""
    start = time.perf_counter()
    try:
        tr = run_domain(_problem(s, k, level))
        payload = ("ok", tr.times, tr.states, [tuple(r) for r in tr.step_reports])
    except RunFailure as exc:
        payload = ("failed", exc.dump())
    return payload, time.perf_counter() - start


def _rebuild(s: Scenario, k: int, level: int, payload) -> FlowTrajectory | dict:
    if payload[0] != "ok":
        return payload[1]
    _, times, states, reports = payload
    return FlowTrajectory(_problem(s, k, level), times, states, [StepReport(*r) for r in reports])


def _tasks(s: Scenario) -> list[tuple[int, int]]:
    levels = (0, 1) if s.diagnostics.calibrate else (0,)
    return [(k, lv) for k in s.run.k_list for lv in levels]


def run_batch(scenarios: list[Scenario], out_dir=None, jobs: int = 1) -> BatchResult:
    """Run every (scenario, k) on a worker pool, then assemble reports in order."""
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    names = [s.name for s in scenarios]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValueError(f"scenario names must be unique within a batch: {dupes}")
    out.mkdir(parents=True, exist_ok=True)
    work = [(s, k, lv) for s in scenarios for k, lv in _tasks(s)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_solve, *w) for w in work]
            results = [f.result() for f in futures]
    else:
        results = [_solve(*w) for w in work]

    solved: dict[tuple[str, int, int], object] = {}
    timings: dict[str, dict[str, float]] = {}
    for (s, k, lv), (payload, seconds) in zip(work, results):
        solved[(s.name, k, lv)] = _rebuild(s, k, lv, payload)
        timings.setdefault(s.name, {})[f"k{k}" + ("" if lv == 0 else "_coarse")] = seconds

    reports = []
    for s in scenarios:
        start = time.perf_counter()
        reports.append(_assemble(s, solved, out / s.name))
        timings[s.name]["diagnostics"] = time.perf_counter() - start
    summary = {
        "scenarios": {r.scenario: r.status for r in reports},
        "checks": sum(len(r.checks) for r in reports),
        "failed": sorted(f"{r.scenario}/{c.check}" + ("" if c.k is None else f"/k{c.k}")
                         for r in reports for c in r.checks if c.outcome != "pass"),
    }
    result = BatchResult(reports, out)
    summary["exit_code"] = result.exit_code
    (out / "summary.json").write_text(_json(summary))
    (out / "timings.json").write_text(_json(timings))
    return result


def _write_trajectory(path: Path, traj: FlowTrajectory, R: np.ndarray, stride: int) -> None:
    J = len(traj.times) - 1
    rows = sorted(set(range(0, J + 1, stride)) | {J})
    r = traj.grid.nodes
    with path.open("w", newline="") as fh:
        fh.write("t,r,u,R_g\n")
        for j in rows:
            t = _fmt(traj.times[j])
            fh.writelines(f"{t},{_fmt(ri)},{_fmt(ui)},{_fmt(Ri)}\n" for ri, ui, Ri in zip(r, traj.states[j], R[j]))


def _tolerance_floor(s: Scenario, traj: FlowTrajectory, R: np.ndarray) -> tuple[float, float]:
    """Smallest meaningful tolerances: round-off, plus the Newton residuals accumulated over the run."""
    newton = float(sum(rep.residual for rep in traj.step_reports))
    floor_u = ROUNDOFF * (s.initial.u_hi + traj.bg.r_hi * s.run.T) + newton
    floor_R = ROUNDOFF * max(1.0, float(np.max(np.abs(R))))
    return floor_u, floor_R


def _homothetic_oracle(s: Scenario, traj: FlowTrajectory, R: np.ndarray):
    """Error against u = c - t R_M for constant data on a constant-curvature background."""
    c = s.initial.u_lo
    exact = homothetic_solution(traj.bg, c, traj.times)[:, None]
    err_u = float(np.max(np.abs(traj.states - exact)))
    R_exact = traj.bg.curvature(0.0) / exact
    interior = R[:, 1:-1]
    if traj.bg.curvature(0.0) == 0.0:
        err_R = float(np.max(np.abs(interior)))
    else:
        err_R = float(np.max(np.abs(interior / R_exact - 1.0)))
    return err_u, err_R


def _assemble(s: Scenario, solved: dict, folder: Path) -> RunReport:
    folder.mkdir(parents=True, exist_ok=True)
    rep = RunReport(scenario=s.name, config=s.echo())
    diag = s.diagnostics
    lp_rows: list[dict] = []
    finished: dict[int, FlowTrajectory | BaseException] = {}
    constant_oracle = s.initial.family == "constant" and s.background.kind in ("euclidean", "hyperbolic")

    for k in s.run.k_list:
        traj = solved[(s.name, k, 0)]
        if isinstance(traj, dict):
            rep.add("run", k, "error", detail=traj["message"])
            (folder / f"failure_k{k}.json").write_text(_json(traj))
            finished[k] = RunFailure(traj["message"], traj["time"], None)
            continue
        rep.add("run", k, "pass", detail=f"{len(traj.times) - 1} steps")
        finished[k] = traj
        R = curvature_history(traj)

        tol = DiscTolerance(0.0, 0.0)
        coarse_bounds = None
        if diag.calibrate:
            coarse = solved[(s.name, k, 1)]
            if isinstance(coarse, dict):
                rep.add("calibration", k, "error", detail=coarse["message"])
            else:
                R_coarse = curvature_history(coarse)
                tol = calibrate_tolerance(traj, coarse, R, R_coarse)
                coarse_bounds = bounds_report(coarse, tol, R=R_coarse)
                rep.add("calibration", k, "pass", detail=f"eps_u={tol.eps_u!r} eps_R={tol.eps_R!r}")
        floor_u, floor_R = _tolerance_floor(s, traj, R)
        tol = DiscTolerance(max(tol.eps_u, floor_u), max(tol.eps_R, floor_R))
        rep.tolerances[str(k)] = {"eps_u": tol.eps_u, "eps_R": tol.eps_R}

        br: BoundsReport = bounds_report(traj, tol, r0s=diag.r0, ps=diag.p, times=diag.sample_times, R=R)
        (folder / f"bounds_k{k}.json").write_text(_json(br.to_dict()))
        lp_rows.extend(br.lp_table)
        rep.add("sandwich", k, br.sandwich.passed, br.sandwich_margin)
        rep.add("r_lower", k, br.r_lower.passed, br.r_lower_margin,
                detail=f"boundary_sharp={br.r_lower.boundary_sharp_margin!r}")
        if coarse_bounds is not None:
            slack = floor_u
            grew = max(0.0, -br.sandwich_margin) - max(0.0, -coarse_bounds.sandwich_margin)
            rep.add("sandwich_doubling", k, grew <= slack, -grew,
                    detail=f"coarse={coarse_bounds.sandwich_margin!r} fine={br.sandwich_margin!r}")
        if constant_oracle:
            err_u, err_R = _homothetic_oracle(s, traj, R)
            rep.add("oracle_u", k, err_u <= ORACLE_U_TOL, ORACLE_U_TOL - err_u)
            rep.add("oracle_R", k, err_R <= ORACLE_R_RTOL, ORACLE_R_RTOL - err_R)
        _write_trajectory(folder / f"traj_k{k}.csv", traj, R, s.run.output_stride)

    with (folder / "lp_table.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "t", "p", "r0", "part", "value"])
        for row in lp_rows:
            w.writerow([_fmt(row["k"]), _fmt(row["t"]), _fmt(row["p"]), _fmt(row["r0"]), row["part"], _fmt(row["value"])])

    ran = [k for k, v in finished.items() if not isinstance(v, BaseException)]
    if len(ran) >= 2 and lp_rows:
        worst = math.inf
        groups: dict[tuple, list[float]] = {}
        for row in lp_rows:
            groups.setdefault((row["t"], row["p"], row["r0"], row["part"]), []).append(row["value"])
        for vals in groups.values():
            mean = float(np.mean(vals))
            spread = float(np.max(vals) - np.min(vals))
            worst = min(worst, LP_BAND * mean - spread)
        rep.add("lp_band", None, worst >= 0, worst)

    if s.exhaustion.enabled:
        ex = exhaustion_report(finished, s.exhaustion.r0)
        rep.exhaustion = ex.to_dict()
        (folder / "exhaustion.json").write_text(_json(rep.exhaustion))
        if ex.failures:
            rep.add("exhaustion_monotone", None, "error", detail="some k did not run")
        else:
            d = [ex.distances[k] for k in sorted(ex.distances)]
            gap = min((a + ex.slack - b for a, b in zip(d, d[1:])), default=0.0)
            rep.add("exhaustion_monotone", None, ex.monotone, gap)

    if diag.sobolev_samples > 0:
        samples = random_sobolev_samples(s.background.build(), diag.sobolev_samples, s.seed, vary_u=True)
        rel = min(x.margin / max(x.lhs, x.rhs, 1e-300) for x in samples)
        rep.add("sobolev", None, all(x.passed for x in samples), rel,
                detail=f"{diag.sobolev_samples} samples, seed {s.seed}")

    (folder / "run_report.json").write_text(_json(rep.to_dict()))
    return rep


def format_table(reports: list[RunReport]) -> str:
    lines = [f"{'scenario':<18} {'check':<20} {'k':>4}  {'outcome':<7} margin"]
    for r in reports:
        for c in r.checks:
            margin = "" if c.margin is None else f"{c.margin: .3e}"
            k = "" if c.k is None else str(c.k)
            lines.append(f"{r.scenario:<18} {c.check:<20} {k:>4}  {c.outcome:<7} {margin}")
    return "\n".join(lines)


def verify_suite(out_dir=None, jobs: int = 1, seed: int | None = None, names=None, echo=print) -> BatchResult:
    """Run the builtin scenarios and print one line per check."""
    scenarios = builtin_scenarios() if names is None else [s for s in builtin_scenarios() if s.name in names]
    if seed is not None:
        scenarios = [replace(s, seed=int(seed)) for s in scenarios]
    out = Path(out_dir) if out_dir is not None else default_out_dir() / "verify"
    result = run_batch(scenarios, out, jobs)
    echo(format_table(result.reports))
    echo(f"exit status {result.exit_code} ({len(BUILTINS)} builtins available)")
    return result


def emit_plot_data(report_path, out_dir=None) -> list[Path]:
    """Gnuplot column files from a scenario folder: one block per stored time."""
    report_path = Path(report_path)
    folder = report_path.parent
    report = json.loads(report_path.read_text())
    out = Path(out_dir) if out_dir is not None else folder / "plot"
    out.mkdir(parents=True, exist_ok=True)
    written = []

    for traj_file in sorted(folder.glob("traj_k*.csv")):
        data = np.loadtxt(traj_file, delimiter=",", skiprows=1, ndmin=2)
        target = out / traj_file.with_suffix(".dat").name
        with target.open("w") as fh:
            fh.write("# r u R_g; one block per time, blocks separated by two blank lines\n")
            for t in np.unique(data[:, 0]):
                block = data[data[:, 0] == t]
                fh.write(f"# t = {_fmt(t)}\n")
                fh.writelines(f"{_fmt(a)} {_fmt(b)} {_fmt(c)}\n" for a, b, c in block[:, 1:])
                fh.write("\n\n")
        written.append(target)

    lp_file = folder / "lp_table.csv"
    if lp_file.exists():
        with lp_file.open() as fh:
            rows = list(csv.DictReader(fh))
        groups: dict[tuple, list[dict]] = {}
        for row in rows:
            groups.setdefault((row["part"], row["p"], row["r0"]), []).append(row)
        for (part, p, r0), grp in sorted(groups.items()):
            target = out / f"lp_{part}_p{p}_r0{r0}.dat"
            with target.open("w") as fh:
                fh.write("# t value; one block per k\n")
                for k in sorted({int(r["k"]) for r in grp}):
                    fh.write(f"# k = {k}\n")
                    fh.writelines(f"{r['t']} {r['value']}\n" for r in grp if int(r["k"]) == k)
                    fh.write("\n\n")
            written.append(target)

    if report.get("exhaustion"):
        target = out / "exhaustion.dat"
        dist = report["exhaustion"]["distances"]
        with target.open("w") as fh:
            fh.write(f"# k d_k (reference k = {report['exhaustion']['k_ref']})\n")
            fh.writelines(f"{k} {_fmt(dist[k])}\n" for k in sorted(dist, key=int))
        written.append(target)

    target = out / "checks.dat"
    with target.open("w") as fh:
        fh.write("# check k outcome margin\n")
        for c in report["checks"]:
            margin = "nan" if c["margin"] is None else _fmt(c["margin"])
            fh.write(f"{c['check']} {c['k'] if c['k'] is not None else '-'} {c['outcome']} {margin}\n")
    written.append(target)
    return written
