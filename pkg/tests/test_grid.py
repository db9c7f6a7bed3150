import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qikt.errors import GridError, OutOfDomain
from qikt.grid import (
    PhysicalConstants,
    SpatialGrid,
    density_mask,
    derivative,
    divergence,
    gradient,
    integrate,
    interpolate,
    laplacian,
)


def test_grid_nodes_exclude_upper_bound():
    g = SpatialGrid((-2.0,), (2.0,), (16,))
    x = g.axis(0)
    assert x[0] == -2.0
    assert x[-1] == pytest.approx(2.0 - 0.25)
    assert g.spacing == (0.25,)


@pytest.mark.parametrize("n", [8, 100, 0])
def test_grid_rejects_bad_point_counts(n):
    with pytest.raises(GridError):
        SpatialGrid.uniform(n, 5.0)


def test_constants_validated():
    with pytest.raises(ValueError):
        PhysicalConstants(hbar=0.0)
    with pytest.raises(ValueError):
        PhysicalConstants(m=-1.0)


def test_refine_and_coarsen_keep_bounds():
    g = SpatialGrid.uniform(64, 3.0, dim=2)
    assert g.refined(2).n == (128, 128)
    assert g.coarsened(4).n == (16, 16)
    assert g.refined(2).lower == g.lower


@pytest.mark.parametrize("p", [0, 1, 2, 3, 4])
def test_first_derivative_exact_for_quartics_everywhere(p):
    g = SpatialGrid.uniform(32, 2.0)
    x = g.axis(0)
    d = derivative(x**p, g.spacing[0])
    expect = p * x ** max(p - 1, 0) if p else np.zeros_like(x)
    np.testing.assert_allclose(d, expect, atol=1e-10)


@pytest.mark.parametrize("p", [0, 1, 2, 3, 4])
def test_second_derivative_exact_for_quartics_everywhere(p):
    g = SpatialGrid.uniform(32, 2.0)
    x = g.axis(0)
    d = derivative(x**p, g.spacing[0], order=2)
    expect = p * (p - 1) * x ** max(p - 2, 0) if p > 1 else np.zeros_like(x)
    np.testing.assert_allclose(d, expect, atol=1e-9)


def test_derivative_fourth_order_convergence():
    errs = []
    for n in (64, 128, 256):
        g = SpatialGrid.uniform(n, np.pi)
        x = g.axis(0)
        errs.append(np.max(np.abs(derivative(np.sin(1.3 * x), g.spacing[0]) - 1.3 * np.cos(1.3 * x))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.7)


def test_gradient_laplacian_divergence_2d():
    g = SpatialGrid.uniform(64, 2.0, dim=2)
    X, Y = g.mesh()
    f = X**2 * Y + Y**3
    gr = gradient(f, g)
    np.testing.assert_allclose(gr[0], 2 * X * Y, atol=1e-9)
    np.testing.assert_allclose(gr[1], X**2 + 3 * Y**2, atol=1e-9)
    np.testing.assert_allclose(laplacian(f, g), 2 * Y + 6 * Y, atol=1e-8)
    np.testing.assert_allclose(divergence(np.stack([X, Y]), g), 2.0, atol=1e-10)


def test_integrate_normalized_gaussian():
    g = SpatialGrid.uniform(256, 12.0)
    x = g.axis(0)
    rho = np.exp(-0.5 * x**2) / np.sqrt(2 * np.pi)
    assert integrate(rho, g) == pytest.approx(1.0, abs=1e-14)
    assert integrate(rho * x**2, g) == pytest.approx(1.0, abs=1e-13)


def test_density_mask_relative_floor():
    rho = np.array([1.0, 1e-13, 2e-12, 0.0])
    assert density_mask(rho).tolist() == [True, False, True, False]


@settings(max_examples=50, deadline=None)
@given(st.floats(-3.9, 3.8), st.floats(-3.9, 3.8), st.floats(-5, 5), st.floats(-5, 5))
def test_interpolation_exact_for_bilinear_functions(x, y, a, b):
    g = SpatialGrid.uniform(32, 4.0, dim=2)
    X, Y = g.mesh()
    f = a * X + b * Y + 0.5 * X * Y + 1.0
    val = interpolate(g, f, np.array([[x, y]]))[0]
    assert val == pytest.approx(a * x + b * y + 0.5 * x * y + 1.0, abs=1e-11)


def test_interpolation_stacks_leading_axes_and_matches_numpy():
    g = SpatialGrid.uniform(64, 3.0)
    x = g.axis(0)
    pts = np.linspace(-2.9, 2.8, 17)[:, None]
    vals = np.stack([np.sin(x), np.cos(x)])
    out = interpolate(g, vals, pts)
    assert out.shape == (2, 17)
    np.testing.assert_allclose(out[1], np.interp(pts[:, 0], x, np.cos(x)), atol=1e-14)


def test_interpolation_outside_hull_raises():
    g = SpatialGrid.uniform(16, 1.0)
    with pytest.raises(OutOfDomain):
        interpolate(g, g.axis(0), np.array([[0.99]]))
    with pytest.raises(OutOfDomain):
        interpolate(g, g.axis(0), np.array([[np.nan]]))
