import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yamabe_lab.background import euclidean, hyperbolic
from yamabe_lab.flow import (
    DomainProblem,
    PositivityError,
    RunFailure,
    boundary_value,
    cutoff,
    homothetic_solution,
    pde_rhs,
    run_domain,
    step_flow,
    transition,
    truncate_initial_data,
    u_power_form_residual,
)
from yamabe_lab.grid import ConformalField, RadialGrid
from yamabe_lab.initial import InitialDataSpec

CONST1 = InitialDataSpec("constant", 1.0, 1.0)


def test_cutoff_examples():
    assert cutoff(0.0, 5.0, 6.0) == 1.0
    assert cutoff(5.0, 5.0, 6.0) == 1.0
    assert cutoff(6.0, 5.0, 6.0) == 0.0
    assert cutoff(7.5, 5.0, 6.0) == 0.0
    assert cutoff(5.5, 5.0, 6.0) == pytest.approx(0.5, abs=1e-15)
    s = np.linspace(-0.5, 1.5, 2001)
    phi = transition(s)
    assert np.all(np.diff(phi) <= 0) and phi.min() >= 0 and phi.max() <= 1
    with pytest.raises(ValueError):
        cutoff(1.0, 6.0, 5.0)
    with pytest.raises(ValueError):
        cutoff(1.0, 0.0, 5.0)


def test_cutoff_is_flat_at_the_ends():
    # the distance to the end values decays faster than any power of the offset
    eps = np.array([1e-2, 1e-3])
    assert np.all(1.0 - transition(eps) < eps**8)
    assert np.all(transition(1.0 - eps) < eps**8)


def test_truncate_initial_data():
    g = RadialGrid.uniform(8, 1 / 16)
    init = InitialDataSpec("high-frequency-oscillation", 1.0, 3.0)
    u0 = ConformalField(g, init.evaluate(g.nodes), "conformal-factor")
    tr = truncate_initial_data(u0, 1.0, 7.0, 8.0).values
    inner = g.nodes <= 7.0
    np.testing.assert_array_equal(tr[inner], u0.values[inner])
    assert tr[-1] == 1.0
    assert np.all((tr >= 1.0) & (tr <= 3.0))


def test_boundary_value_examples():
    assert boundary_value(hyperbolic(3), 1.0, 0.0, 6.0) == 1.0
    assert boundary_value(hyperbolic(3), 1.0, 0.5, 6.0) == pytest.approx(4.0, rel=1e-12)
    assert boundary_value(euclidean(4), 2.0, 3.0, 6.0) == 2.0


def test_pde_rhs_examples():
    g = RadialGrid.uniform(6, 1 / 16)
    c = ConformalField(g, np.full(len(g.nodes), 2.0), "conformal-factor")
    assert np.all(pde_rhs(c, euclidean(3)).values == 0.0)
    for m in (3, 5):
        np.testing.assert_allclose(pde_rhs(c, hyperbolic(m)).values, m * (m - 1), rtol=1e-12)
    # in dimension 6 only the Laplacian term survives: u = 1 + r^2 gives 5 * 12 / u
    u = ConformalField(g, 1 + g.nodes**2, "conformal-factor")
    rhs = pde_rhs(u, euclidean(6)).values
    np.testing.assert_allclose(rhs[:-1], 5 * 12 / (1 + g.nodes[:-1] ** 2), rtol=1e-10)
    neg = ConformalField(g, g.nodes - 1.0)
    with pytest.raises(PositivityError):
        pde_rhs(neg, euclidean(3))


def test_step_flow_examples():
    prob = DomainProblem.build(euclidean(3), InitialDataSpec("constant", 2.0, 2.0), 6, 1.0, h=1 / 16)
    u = step_flow(prob.u0_truncated, 0.0, 0.01, prob)
    np.testing.assert_allclose(u.values, 2.0, atol=1e-13)
    prob = DomainProblem.build(hyperbolic(3), CONST1, 6, 1.0, h=1 / 16)
    u = step_flow(prob.u0_truncated, 0.0, 0.01, prob)
    np.testing.assert_allclose(u.values, 1.0 + 6 * 0.01, atol=1e-12)
    with pytest.raises(ValueError):
        step_flow(prob.u0_truncated, 0.0, 0.0, prob)


def test_problem_validation():
    with pytest.raises(ValueError, match="k must be >= 5"):
        DomainProblem.build(hyperbolic(3), CONST1, 4, 1.0, h=1 / 16)
    with pytest.raises(ValueError):
        DomainProblem.build(hyperbolic(3), CONST1, 6, -1.0)
    p = DomainProblem.build(hyperbolic(3), CONST1, 6, 1.0, dt=0.3)
    assert p.n_steps == 4 and p.times[-1] == 1.0


@pytest.mark.parametrize("m", [3, 4])
def test_homothetic_run(m):
    tr = run_domain(DomainProblem.build(hyperbolic(m), CONST1, 6, 1.0, h=1 / 32, dt=1 / 128))
    exact = homothetic_solution(hyperbolic(m), 1.0, tr.times)
    np.testing.assert_allclose(tr.states, np.broadcast_to(exact[:, None], tr.states.shape), atol=1e-6)
    assert tr.states[-1, 0] == pytest.approx(1.0 + m * (m - 1), abs=1e-6)


@pytest.fixture(scope="module")
def hifreq_run():
    init = InitialDataSpec("high-frequency-oscillation", 1.0, 3.0)
    return run_domain(DomainProblem.build(hyperbolic(4), init, 8, 0.5, h=1 / 32, dt=1 / 256))


def test_run_invariants(hifreq_run):
    tr = hifreq_run
    p = tr.problem
    assert tr.states.shape == (len(tr.times), len(tr.grid.nodes))
    np.testing.assert_array_equal(tr.states[0], p.u0_truncated.values)
    for j, t in enumerate(tr.times):
        assert tr.states[j, -1] == p.boundary(t)
    assert np.all(tr.states > 0)
    assert len(tr.step_reports) == len(tr.times) - 1
    assert all(r.residual <= p.newton_tol for r in tr.step_reports)


def test_run_is_deterministic(hifreq_run):
    again = run_domain(hifreq_run.problem)
    np.testing.assert_array_equal(again.states, hifreq_run.states)


@settings(max_examples=8)
@given(lo=st.floats(0.5, 2.0), gap=st.floats(0.0, 2.0), m=st.integers(3, 5),
       family=st.sampled_from(["smooth-bump", "high-frequency-oscillation"]))
def test_solution_stays_between_homothetic_solutions(lo, gap, m, family):
    bg = hyperbolic(m)
    init = InitialDataSpec(family, lo, lo + gap)
    tr = run_domain(DomainProblem.build(bg, init, 5, 0.25, h=1 / 8, dt=1 / 32))
    below = homothetic_solution(bg, lo, tr.times)[:, None]
    above = homothetic_solution(bg, lo + gap, tr.times)[:, None]
    tol = 1e-9 * above
    assert np.all(tr.states >= below - tol) and np.all(tr.states <= above + tol)


def test_unrecoverable_step_raises_run_failure():
    init = InitialDataSpec("high-frequency-oscillation", 1.0, 3.0)
    prob = DomainProblem.build(hyperbolic(4), init, 8, 64.0, dt=64.0, h=1 / 16, max_halvings=0, newton_max_iter=3)
    with pytest.raises(RunFailure) as info:
        run_domain(prob)
    dump = info.value.dump()
    assert dump["time"] == 0.0
    assert "failed" in dump["message"]
    assert len(dump["state"]) == len(prob.grid.nodes)


def test_power_form_residual_vanishes_on_homothetic_flow():
    tr = run_domain(DomainProblem.build(euclidean(3), InitialDataSpec("constant", 2.0, 2.0), 6, 1.0, h=1 / 16, dt=1 / 16))
    res = u_power_form_residual(tr)
    assert res.power_form < 1e-12 and res.divergence_form < 1e-12
    # u is linear in t but u^(eta+1) is not: the central difference is second order
    res = [u_power_form_residual(run_domain(DomainProblem.build(hyperbolic(3), CONST1, 6, 1.0, h=1 / 16, dt=dt)), times=[0.5])
           for dt in (1 / 16, 1 / 32)]
    assert res[0].power_form / res[1].power_form == pytest.approx(4.0, rel=0.05)
    assert res[0].divergence_form / res[1].divergence_form == pytest.approx(4.0, rel=0.05)
    with pytest.raises(ValueError):
        u_power_form_residual(tr, times=[0.0])
