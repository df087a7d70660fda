import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forchlab.errors import DomainError
from forchlab.services.constitutive import (
    ConstitutiveLaw, ForchheimerPolynomial, degree_exponent, eval_g, eval_H, eval_H_grid, eval_K,
    eval_K_prime, fit_bounds, power_law, solve_s, three_term, two_term,
)


def closed_form_two_term(xi):
    # s (1 + s) = xi  =>  K = 2 / (1 + sqrt(1 + 4 xi))
    return 2.0 / (1.0 + np.sqrt(1.0 + 4.0 * xi))


@st.composite
def polynomials(draw):
    count = draw(st.integers(min_value=1, max_value=3))
    exponents = sorted(draw(st.lists(st.floats(0.1, 3.0), min_size=count, max_size=count, unique=True)))
    if any(b - a < 1e-3 for a, b in zip(exponents, exponents[1:])):
        exponents = [0.5 * (k + 1) for k in range(count)]
    coefficients = draw(st.lists(st.floats(0.1, 10.0), min_size=count + 1, max_size=count + 1))
    return ForchheimerPolynomial(tuple([0.0] + exponents), tuple(coefficients))


def test_two_term_closed_form_values(law):
    assert eval_K(law, 2.0) == pytest.approx(0.5, rel=1e-12)
    assert eval_K(law, 6.0) == pytest.approx(1 / 3, rel=1e-12)
    assert eval_K(law, 0.0) == 1.0


def test_two_term_matches_closed_form_on_array(law):
    xi = np.geomspace(1e-8, 1e6, 200)
    np.testing.assert_allclose(eval_K(law, xi), closed_form_two_term(xi), rtol=1e-11)


def test_scalar_and_array_outputs(law):
    assert isinstance(eval_K(law, 1.5), float)
    out = eval_K(law, np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert out.shape == (2, 2)


@settings(max_examples=60, deadline=None)
@given(polynomials(), st.floats(0.0, 1e6))
def test_root_residual(poly, xi):
    law = ConstitutiveLaw(poly)
    s = solve_s(law, xi)
    assert s >= 0
    assert abs(s * poly(s) - xi) <= 1e-12 * max(1.0, xi)


@settings(max_examples=25, deadline=None)
@given(polynomials())
def test_K_nonincreasing(poly):
    law = ConstitutiveLaw(poly)
    xi = np.concatenate(([0.0], np.geomspace(1e-6, 1e6, 1000)))
    K = eval_K(law, xi)
    assert np.all(np.diff(K) <= 1e-12)
    assert K[0] == pytest.approx(1.0 / poly.a0)


@pytest.mark.parametrize('poly', [two_term(), three_term(), power_law(alpha_n=0.5), power_law(a_n=3.0, alpha_n=2.5)])
def test_K_prime_bounds(poly):
    law = ConstitutiveLaw(poly)
    xi = np.geomspace(1e-6, 1e6, 500)
    K = eval_K(law, xi)
    scaled = eval_K_prime(law, xi) * xi
    assert np.all(scaled <= 1e-9)
    assert np.all(scaled >= -law.a * K - 1e-9)


def test_K_prime_matches_finite_differences(law3):
    xi = np.array([0.05, 0.7, 3.0, 40.0])
    step = 1e-6 * xi
    fd = (eval_K(law3, xi + step) - eval_K(law3, xi - step)) / (2 * step)
    np.testing.assert_allclose(eval_K_prime(law3, xi), fd, rtol=1e-6)


def test_K_prime_at_origin(law):
    # g'(0) = a1 for alpha_1 = 1, so K'(0) = -a1 / a0^3
    assert eval_K_prime(law, 0.0) == pytest.approx(-1.0)


@pytest.mark.parametrize('xi', [0.1, 1.0, 10.0, 1e3])
def test_H_bounds(law, xi):
    K = eval_K(law, xi)
    H = eval_H(law, xi)
    assert K * xi ** 2 * (1 - 1e-8) <= H <= 2 * K * xi ** 2 * (1 + 1e-8)


def test_H_closed_form_for_two_term(law):
    # H(xi) = int_0^{xi^2} K(sqrt(s)) ds with K(u) = 2 / (1 + sqrt(1 + 4u))
    xi = 3.0
    s = np.linspace(0.0, xi ** 2, 200001)
    reference = np.trapezoid(closed_form_two_term(np.sqrt(s)), s)
    assert eval_H(law, xi) == pytest.approx(reference, rel=1e-6)


def test_H_grid_agrees_with_adaptive(law3):
    xi = np.array([0.0, 0.3, 1.0, 5.0, 50.0])
    np.testing.assert_allclose(eval_H_grid(law3, xi), eval_H(law3, xi), rtol=1e-6, atol=1e-14)


@pytest.mark.parametrize('xi', [1e3, 1e4, 1e6])
def test_H_grid_accurate_at_large_gradients(law, xi):
    assert eval_H_grid(law, xi) == pytest.approx(eval_H(law, xi), rel=1e-7)


@pytest.mark.parametrize('fn', [eval_K, eval_K_prime, eval_H, eval_H_grid, solve_s])
def test_negative_xi_rejected(law, fn):
    with pytest.raises(DomainError):
        fn(law, -1.0)
    with pytest.raises(DomainError):
        fn(law, np.array([1.0, -0.5]))


@pytest.mark.parametrize('exponents, coefficients', [
    ((0.0,), (1.0,)),
    ((0.0, 1.0), (1.0,)),
    ((0.5, 1.0), (1.0, 1.0)),
    ((0.0, 2.0, 1.0), (1.0, 1.0, 1.0)),
    ((0.0, 1.0), (1.0, 0.0)),
    ((0.0, math.inf), (1.0, 1.0)),
])
def test_invalid_polynomials(exponents, coefficients):
    with pytest.raises(DomainError):
        ForchheimerPolynomial(exponents, coefficients)


def test_eval_g():
    assert eval_g(ForchheimerPolynomial((0.0, 1.0), (1.0, 1.0)), 3.0) == pytest.approx(4.0)
    poly = ForchheimerPolynomial((0.0, 0.5, 2.0), (1.0, 2.0, 1.0))
    np.testing.assert_allclose(eval_g(poly, np.array([0.0, 4.0])), [1.0, 21.0])
    with pytest.raises(DomainError):
        eval_g(poly, -1.0)


def test_degree_exponent():
    assert degree_exponent(two_term()) == pytest.approx(0.5)
    assert degree_exponent(three_term()) == pytest.approx(2 / 3)


def test_fit_bounds_brackets_samples(law3):
    fitted = fit_bounds(law3, 1e4, 500)
    xi = np.geomspace(1e-3, 1e4, 300)
    scaled = eval_K(law3, xi) * (1 + xi) ** law3.a
    # off-sample points may sit between the fitted samples around an interior extremum
    assert np.all(scaled >= fitted.d1 * (1 - 1e-3))
    assert np.all(scaled <= fitted.d2 * (1 + 1e-3))
    assert fitted.d3 > 0



def test_fit_bounds_two_term_to_large_gradients(law, rng):
    fitted = fit_bounds(law, 1e6, 10_000)
    assert fitted.d2 / fitted.d1 < 10

    refined = fit_bounds(law, 1e6, 20_000)
    assert refined.d1 == pytest.approx(fitted.d1, rel=0.01)
    assert refined.d2 == pytest.approx(fitted.d2, rel=0.01)

    # held-out gradients, log-uniform over the fitted range
    xi = np.exp(rng.uniform(np.log(1e-8), np.log(1e6), 2000))
    K = eval_K(law, xi)
    weight = (1 + xi) ** law.a
    assert np.all(K >= fitted.d1 / weight * (1 - 1e-4))
    assert np.all(K <= fitted.d2 / weight * (1 + 1e-4))

def test_fit_bounds_needs_samples(law):
    with pytest.raises(DomainError, match='100 samples'):
        fit_bounds(law, 1e3, 50)


def test_lookup_table_certified(law3, rng):
    tabled = law3.with_table(xi_max=1e4, breakpoints=256, probes=2000, seed=3)
    assert tabled.table.certified_error < 1e-8
    xi = rng.uniform(0.0, 1e4, 500)
    np.testing.assert_allclose(eval_K(tabled, xi), eval_K(law3, xi), rtol=1e-7)
    # beyond xi_max the direct root solve is used
    assert eval_K(tabled, 5e4) == eval_K(law3, 5e4)
