import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from yamabe_lab.background import euclidean, hyperbolic
from yamabe_lab.grid import (
    ConformalField,
    DomainError,
    RadialGrid,
    fd_weights,
    integrate_radial,
    laplace_beltrami_radial,
    radial_gradient_sq,
)

GRID = RadialGrid.uniform(6, 1 / 16)
values = arrays(np.float64, len(GRID.nodes), elements=st.floats(-10, 10))


def field(grid, fn):
    return ConformalField.from_function(grid, fn)


def test_fd_weights_reproduce_classic_stencils():
    np.testing.assert_allclose(fd_weights(0.0, [-1.0, 0.0, 1.0], 1), [-0.5, 0.0, 0.5])
    np.testing.assert_allclose(fd_weights(0.0, [-1.0, 0.0, 1.0], 2), [1.0, -2.0, 1.0])
    np.testing.assert_allclose(fd_weights(2.0, [0.0, 1.0, 2.0], 1), [0.5, -2.0, 1.5])


def test_grid_invariants():
    g = RadialGrid.uniform(8, 1 / 64)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 8.0
    assert g.n == 512 and g.is_uniform and g.h == pytest.approx(1 / 64)
    with pytest.raises(DomainError):
        RadialGrid.uniform(8, 1.0)  # only 8 intervals
    with pytest.raises(DomainError):
        RadialGrid.uniform(6, 0.07)  # does not divide k
    with pytest.raises(DomainError):
        RadialGrid(k=1.0, nodes=np.r_[0.0, np.linspace(0.5, 0.01, 16), 1.0])
    with pytest.raises(DomainError):
        RadialGrid(k=2.0, nodes=np.linspace(0.0, 1.0, 40))


def test_nodes_coincide_across_domain_radii():
    a, b = RadialGrid.uniform(6, 1 / 64), RadialGrid.uniform(14, 1 / 64)
    assert np.array_equal(a.nodes, b.nodes[: len(a.nodes)])


def test_refined_grid_clusters_near_boundary():
    g = RadialGrid.refined(8, 256, strength=0.5)
    d = np.diff(g.nodes)
    assert g.spacing_policy == "geometric-refinement-near-boundary"
    assert d[-1] < d[0] / 2.5
    assert np.all(np.diff(d) <= 1e-15)
    fine = g.refine()
    assert np.array_equal(fine.nodes[::2], g.nodes)
    with pytest.raises(DomainError):
        RadialGrid.refined(8, 256, strength=1.0)


def test_gradient_examples():
    bg = euclidean(3)
    assert np.all(radial_gradient_sq(field(GRID, lambda r: 3.0 + 0 * r), bg).values == 0.0)
    lin = radial_gradient_sq(field(GRID, lambda r: r), bg).values
    np.testing.assert_allclose(lin[1:], 1.0, rtol=1e-12)
    assert lin[0] == 0.0  # symmetry forces f'(0) = 0


def test_gradient_of_square_converges_at_second_order():
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        g = RadialGrid.uniform(6, h)
        d = radial_gradient_sq(field(g, lambda r: np.sin(r) ** 2 + r**2), euclidean(3)).values
        exact = (np.sin(2 * g.nodes) + 2 * g.nodes) ** 2
        errs.append(np.max(np.abs(d - exact)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))
    g = RadialGrid.uniform(6, 1 / 32)
    d = radial_gradient_sq(field(g, lambda r: r**2), euclidean(3)).values
    np.testing.assert_allclose(d[1:-1], (2 * g.nodes[1:-1]) ** 2, rtol=1e-12)


def test_laplacian_examples():
    g = RadialGrid.uniform(6, 1 / 32)
    assert np.all(laplace_beltrami_radial(field(g, lambda r: 2.0 + 0 * r), hyperbolic(3)).values == 0.0)
    for m in (3, 5):
        lap = laplace_beltrami_radial(field(g, lambda r: r**2), euclidean(m)).values
        np.testing.assert_allclose(lap, 2 * m, rtol=1e-10)


def _cosh_error(h):
    g = RadialGrid.uniform(6, h)
    lap = laplace_beltrami_radial(field(g, np.cosh), hyperbolic(3)).values
    return np.max(np.abs(lap / (3 * np.cosh(g.nodes)) - 1))


def test_laplacian_hyperbolic_cosh_second_order():
    errs = [_cosh_error(h) for h in (1 / 16, 1 / 32, 1 / 64, 1 / 128)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios
    assert errs[-1] < 1e-4


@pytest.mark.parametrize("m", [3, 4, 6])
def test_laplacian_second_order_analytic(m):
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        g = RadialGrid.uniform(5, h)
        r = g.nodes
        f = np.exp(-(r**2))
        lap = laplace_beltrami_radial(ConformalField(g, f), euclidean(m)).values
        exact = (4 * r**2 - 2 * m) * np.exp(-(r**2))
        errs.append(np.max(np.abs(lap - exact)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios


def test_integration_examples():
    g = RadialGrid.uniform(6, 1 / 64)
    one = ConformalField(g, np.ones_like(g.nodes))
    four = ConformalField(g, np.full_like(g.nodes, 4.0), "conformal-factor")
    assert integrate_radial(one, None, euclidean(3), 1.0) == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert integrate_radial(one, four, euclidean(3), 1.0) == pytest.approx(32 * math.pi / 3, rel=1e-12)
    assert integrate_radial(one, None, hyperbolic(3), 1.0) == pytest.approx(math.pi * (math.sinh(2) - 2), rel=1e-7)
    assert integrate_radial(one, None, euclidean(3), 0.0) == 0.0
    # between nodes: linear interpolation of the end value
    assert integrate_radial(one, None, euclidean(3), 1.005) == pytest.approx(4 * math.pi / 3 * 1.005**3, rel=1e-5)
    with pytest.raises(DomainError):
        integrate_radial(one, None, euclidean(3), 6.5)


def test_integration_on_refined_grid():
    g = RadialGrid.refined(6, 600)
    one = ConformalField(g, np.ones_like(g.nodes))
    assert integrate_radial(one, None, euclidean(3), 6.0) == pytest.approx(4 * math.pi * 72, rel=1e-4)


def test_conformal_field_invariants():
    with pytest.raises(ValueError):
        ConformalField(GRID, np.zeros(len(GRID.nodes)), "conformal-factor")
    with pytest.raises(ValueError):
        ConformalField(GRID, np.full(len(GRID.nodes), np.nan))
    with pytest.raises(ValueError):
        ConformalField(GRID, np.ones(3))
    with pytest.raises(ValueError):
        ConformalField(GRID, np.ones(len(GRID.nodes)), "pressure")
    f = ConformalField(GRID, np.ones(len(GRID.nodes)))
    with pytest.raises(ValueError):
        f.values[0] = 2.0


@given(f=values, g=values, a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_operators_are_linear(f, g, a, b):
    bg = hyperbolic(4)
    op = lambda v: laplace_beltrami_radial(ConformalField(GRID, v), bg).values
    lhs = op(a * f + b * g)
    rhs = a * op(f) + b * op(g)
    scale = 1 + np.max(np.abs(op(f))) * abs(a) + np.max(np.abs(op(g))) * abs(b)
    np.testing.assert_allclose(lhs, rhs, atol=1e-11 * scale)
    d = GRID.derivative
    np.testing.assert_allclose(d(a * f + b * g), a * d(f) + b * d(g), atol=1e-11 * (1 + scale))


@given(f=arrays(np.float64, len(GRID.nodes), elements=st.floats(0, 100)), r_max=st.floats(0, 6))
def test_integral_of_nonnegative_field_is_nonnegative(f, r_max):
    assert integrate_radial(ConformalField(GRID, f), None, hyperbolic(3), r_max) >= 0.0
