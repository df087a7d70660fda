import logging

import numpy as np
import pytest
import sympy as sp

from forchlab.errors import ConfigError, DomainError
from forchlab.services.discretization import (
    XI_CLAMP, BoundaryData, FaceField, Grid, ScalarField, boundary_gradient_magnitudes, cell_gradient,
    cell_inner, clamp_xi, divergence, face_inner, gradient, nonlinear_flux,
)
from forchlab.services.expressions import parse_expression


@pytest.mark.parametrize('shape, extents', [((3,), (1.0,)), ((8, 2), (1.0, 1.0)), ((4, 4, 4), (1.0,) * 3),
                                            ((8,), (0.0,)), ((8,), (1.0, 1.0))])
def test_grid_rejects_bad_shapes(shape, extents):
    with pytest.raises(DomainError):
        Grid(shape, extents)


def test_grid_geometry(grid2):
    assert grid2.n == 2
    assert grid2.spacing == (1 / 16, 2 / 12)
    assert grid2.cell_volume == pytest.approx(grid2.measure / grid2.size)
    assert grid2.refine().shape == (32, 24)
    x, y = grid2.cell_centers()
    assert x[0, 0] == pytest.approx(1 / 32)
    assert y[0, -1] == pytest.approx(2 - 1 / 12)


def test_field_shape_and_finiteness(grid1):
    with pytest.raises(DomainError):
        ScalarField(grid1, np.zeros(31))
    with pytest.raises(DomainError):
        ScalarField(grid1, np.full(32, np.nan))


def test_expression_language():
    expr = parse_expression('2^x + sqrt(abs(x - y)) * e', 2)
    assert expr.free_symbols == {sp.Symbol('x', real=True), sp.Symbol('y', real=True)}
    with pytest.raises(ConfigError, match='unknown variable'):
        parse_expression('z + 1', 2)
    with pytest.raises(ConfigError, match='unknown variable'):
        parse_expression('y', 1)
    with pytest.raises(ConfigError):
        parse_expression('log(x)', 1)
    with pytest.raises(ConfigError):
        parse_expression('', 1)


def test_derivatives_derived_symbolically():
    psi = BoundaryData.from_expressions('x**2*t', 1)
    assert psi.supplied == ()
    assert not psi.is_static
    x = np.array([0.5])
    np.testing.assert_allclose(psi.time_derivative(x, t=2.0), [0.25])
    np.testing.assert_allclose(psi.gradient(x, t=2.0)[0], [2.0])
    np.testing.assert_allclose(psi.hessian_entries(x, t=2.0)[0][0], [4.0])
    np.testing.assert_allclose(psi.gradient_t(x, t=2.0)[0], [1.0])


def test_constant_psi_broadcasts(grid2):
    psi = BoundaryData.from_expressions('3', 2)
    assert psi.is_static
    assert psi.on_cells(grid2, 0.5).shape == grid2.shape
    assert np.all(psi.on_cells(grid2, 0.5) == 3.0)


def test_validate_accepts_consistent_derivatives(grid2):
    psi = BoundaryData.from_expressions('sin(x)*cos(y)*t', 2, psi_t='sin(x)*cos(y)',
                                        grad=['cos(x)*cos(y)*t', '-sin(x)*sin(y)*t'])
    assert psi.validate(grid2)


def test_validate_rejects_wrong_time_derivative(grid1):
    psi = BoundaryData.from_expressions('sin(x)*t', 1, psi_t='2*sin(x)')
    with pytest.raises(ConfigError, match='psi_t'):
        psi.validate(grid1)


def test_linear_fields_have_exact_face_gradients():
    grid = Grid((8, 6), (1.0, 1.5))
    psi = BoundaryData.from_expressions('x + 3*y', 2)
    field = ScalarField(grid, psi.on_cells(grid, 0.0))
    grad = gradient(field, psi)
    np.testing.assert_allclose(grad.normal[0], 1.0, atol=1e-12)
    np.testing.assert_allclose(grad.normal[1], 3.0, atol=1e-12)
    np.testing.assert_allclose(grad.tangential[0], 3.0, atol=1e-12)
    np.testing.assert_allclose(grad.tangential[1], 1.0, atol=1e-12)
    comps = cell_gradient(field, psi)
    np.testing.assert_allclose(comps[0], 1.0, atol=1e-12)
    np.testing.assert_allclose(comps[1], 3.0, atol=1e-12)


def test_homogeneous_ghosts_use_zero_data(grid1):
    field = ScalarField(grid1, np.ones(32))
    grad = gradient(field)
    h = grid1.spacing[0]
    assert grad.normal[0][0] == pytest.approx(2 / h)
    assert grad.normal[0][-1] == pytest.approx(-2 / h)
    np.testing.assert_allclose(grad.normal[0][1:-1], 0.0)


@pytest.mark.parametrize('shape', [(12,), (9, 7)])
def test_summation_by_parts(shape, rng):
    grid = Grid(shape, (1.0,) * len(shape))
    u = ScalarField(grid, rng.normal(size=shape))
    flux = FaceField(grid, tuple(rng.normal(size=grid.face_shape(d)) for d in range(grid.n)))
    lhs = cell_inner(u.values, divergence(flux).values, grid)
    rhs = -face_inner(gradient(u).as_face_field(), flux, grid)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_divergence_of_constant_flux_vanishes(grid2):
    flux = FaceField(grid2, tuple(np.full(grid2.face_shape(d), 2.5) for d in range(2)))
    np.testing.assert_allclose(divergence(flux).values, 0.0, atol=1e-12)


@pytest.mark.parametrize('shape, extents', [((16,), (1.0,)), ((8, 6), (1.0, 1.5))])
def test_divergence_of_identity_flux_is_one_per_axis(shape, extents):
    grid = Grid(shape, extents)
    components = []
    for d in range(grid.n):
        faces = np.linspace(0.0, extents[d], shape[d] + 1)
        along = [1] * grid.n
        along[d] = shape[d] + 1
        components.append(np.broadcast_to(faces.reshape(along), grid.face_shape(d)).copy())
    only_x = (components[0],) + tuple(np.zeros(grid.face_shape(d)) for d in range(1, grid.n))
    np.testing.assert_allclose(divergence(FaceField(grid, only_x)).values, 1.0, rtol=1e-12)
    np.testing.assert_allclose(divergence(FaceField(grid, tuple(components))).values, grid.n, rtol=1e-12)


def test_face_gradient_is_second_order_for_sine():
    errors = []
    for cells in (32, 64):
        grid = Grid((cells,), (1.0,))
        field = ScalarField(grid, np.sin(np.pi * grid.axis_centers(0)))
        faces = np.linspace(0.0, 1.0, cells + 1)
        errors.append(np.max(np.abs(gradient(field).normal[0] - np.pi * np.cos(np.pi * faces))))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.02)


@pytest.mark.parametrize('expression, dim', [('x + 0.5*sin(pi*x)', 1), ('x*y + sin(x) + 0.3*y**2', 2)])
def test_flux_flips_sign_with_the_data(expression, dim, law3, rng):
    grid = Grid((12,), (1.0,)) if dim == 1 else Grid((9, 7), (1.0, 1.0))
    psi = BoundaryData.from_expressions(expression, dim)
    flipped = BoundaryData.from_expressions(f'-({expression})', dim)
    values = psi.on_cells(grid, 0.0) + 0.1 * rng.normal(size=grid.shape)
    flux = nonlinear_flux(ScalarField(grid, values), law3, psi)
    mirror = nonlinear_flux(ScalarField(grid, -values), law3, flipped)
    for a, b in zip(flux.components, mirror.components):
        np.testing.assert_allclose(b, -a, rtol=1e-12, atol=1e-12)


def test_nonlinear_flux_for_linear_profile(law):
    grid = Grid((10,), (1.0,))
    psi = BoundaryData.from_expressions('2*x', 1)
    field = ScalarField(grid, psi.on_cells(grid, 0.0))
    flux = nonlinear_flux(field, law, psi)
    # K(2) = 1/2 for the two-term law, so the flux is -K * 2 = -1 everywhere
    np.testing.assert_allclose(flux.components[0], -1.0, rtol=1e-12)
    np.testing.assert_allclose(divergence(flux).values, 0.0, atol=1e-10)


def test_boundary_gradient_is_exact_for_quadratics():
    grid = Grid((16,), (1.0,))
    psi = BoundaryData.from_expressions('x**2', 1)
    field = ScalarField(grid, psi.on_cells(grid, 0.0))
    low, high = boundary_gradient_magnitudes(field, psi)
    np.testing.assert_allclose(low, [0.0], atol=1e-12)
    np.testing.assert_allclose(high, [2.0], rtol=1e-12)


def test_boundary_gradient_includes_tangential_part():
    grid = Grid((8, 8), (1.0, 1.0))
    psi = BoundaryData.from_expressions('y', 2)
    field = ScalarField(grid, psi.on_cells(grid, 0.0))
    mags = boundary_gradient_magnitudes(field, psi)
    # walls x = 0 and x = 1 see only the tangential derivative 1; walls y = 0, 1 the normal one
    for mag in mags:
        np.testing.assert_allclose(mag, 1.0, rtol=1e-10)


def test_clamp_xi_warns(caplog):
    with caplog.at_level(logging.WARNING):
        out = clamp_xi(np.array([1.0, 10 * XI_CLAMP]))
    assert out[1] == XI_CLAMP
    assert 'clamping 1 gradient' in caplog.text
