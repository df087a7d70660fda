"""Forchheimer polynomial g(s), the implicit coefficient K(xi) = 1/g(s(xi)), its
derivative, the potential H(xi) and fitted bound constants.

All evaluators accept a scalar or a numpy array and return the same kind.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from ..errors import DomainError, InvariantViolation, NumericalError

logger = logging.getLogger(__name__)

ROOT_MAX_ITER = 200
TABLE_TOLERANCE = 1e-8
H_GRID_NODES = 24


def _as_output(values, like):
    if np.ndim(like) == 0:
        return float(np.asarray(values).reshape(()))
    return values


def _check_nonneg(values, name):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f'{name} must be finite')
    if np.any(arr < 0):
        raise DomainError(f'{name} must be nonnegative, got min {arr.min()!r}')
    return arr


@dataclass(frozen=True)
class ForchheimerPolynomial:
    """g(s) = sum a_i s^alpha_i with 0 = alpha_0 < alpha_1 < ... < alpha_N, a_i > 0."""

    exponents: tuple
    coefficients: tuple

    def __post_init__(self):
        exps = tuple(float(e) for e in self.exponents)
        coefs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, 'exponents', exps)
        object.__setattr__(self, 'coefficients', coefs)

        if len(exps) != len(coefs):
            raise DomainError(f'{len(exps)} exponents but {len(coefs)} coefficients')
        if len(exps) < 2:
            # Pure Darcy (N = 0) is not covered; a1 = 1e-12 is the usual workaround
            raise DomainError('a Forchheimer polynomial needs N >= 1 (at least two terms)')
        if not all(np.isfinite(exps)) or not all(np.isfinite(coefs)):
            raise DomainError('exponents and coefficients must be finite')
        if exps[0] != 0.0:
            raise DomainError(f'alpha_0 must be exactly 0, got {exps[0]!r}')
        if any(b <= a for a, b in zip(exps, exps[1:])):
            raise DomainError(f'exponents must be strictly increasing: {exps}')
        if any(c <= 0 for c in coefs):
            raise DomainError(f'coefficients must be positive: {coefs}')

    @property
    def a0(self):
        return self.coefficients[0]

    @property
    def degree(self):
        return len(self.exponents) - 1

    def __call__(self, s):
        return eval_g(self, s)

    def derivative(self, s):
        """g'(s). At s = 0 this is +inf when alpha_1 < 1."""
        arr = _check_nonneg(s, 's')
        return _as_output(_g_prime(self, arr), s)


def _g(poly, s):
    positive = s > 0
    log_s = np.log(np.where(positive, s, 1.0))
    total = np.full(np.shape(s), poly.a0, dtype=float)
    for alpha, coef in zip(poly.exponents[1:], poly.coefficients[1:]):
        total += coef * np.where(positive, np.exp(alpha * log_s), 0.0)
    return total


def _g_prime(poly, s):
    positive = s > 0
    log_s = np.log(np.where(positive, s, 1.0))
    total = np.zeros(np.shape(s), dtype=float)
    for alpha, coef in zip(poly.exponents[1:], poly.coefficients[1:]):
        if alpha < 1:
            at_zero = np.inf
        elif alpha == 1:
            at_zero = coef
        else:
            at_zero = 0.0
        total += np.where(positive, coef * alpha * np.exp((alpha - 1) * log_s), at_zero)
    return total


def eval_g(poly, s):
    arr = _check_nonneg(s, 's')
    return _as_output(_g(poly, arr), s)


def degree_exponent(poly):
    alpha_n = poly.exponents[-1]
    return alpha_n / (1.0 + alpha_n)


def darcy_like(a0=1.0, a1=1e-12, alpha1=1.0):
    return ForchheimerPolynomial((0.0, alpha1), (a0, a1))


def two_term(a0=1.0, a1=1.0):
    return ForchheimerPolynomial((0.0, 1.0), (a0, a1))


def three_term(a0=1.0, a1=1.0, a2=1.0):
    return ForchheimerPolynomial((0.0, 1.0, 2.0), (a0, a1, a2))


def power_law(a0=1.0, a_n=1.0, alpha_n=1.0):
    return ForchheimerPolynomial((0.0, alpha_n), (a0, a_n))


@dataclass(frozen=True, eq=False)
class KTable:
    """Cubic spline of log K over w = log(1 + xi), certified on random probes."""

    xi_max: float
    breakpoints: int
    spline: CubicSpline = field(repr=False)
    certified_error: float

    def covers(self, xi):
        return xi <= self.xi_max

    def K(self, xi):
        return np.exp(self.spline(np.log1p(xi)))


@dataclass(frozen=True)
class ConstitutiveLaw:
    poly: ForchheimerPolynomial
    root_tolerance: float = 1e-12
    quadrature_tolerance: float = 1e-10
    table: KTable | None = None

    def __post_init__(self):
        if not self.root_tolerance > 0 or not self.quadrature_tolerance > 0:
            raise DomainError('tolerances must be positive')

    @property
    def a(self):
        return degree_exponent(self.poly)

    @property
    def k_max(self):
        return 1.0 / self.poly.a0

    def with_table(self, xi_max=1e6, breakpoints=2048, probes=10_000, seed=0, max_breakpoints=2 ** 17):
        return replace(self, table=build_table(self, xi_max, breakpoints, probes, seed, max_breakpoints))


def _solve_s_array(poly, xi, rtol):
    """Bracketed Newton with bisection fallback for s g(s) = xi (xi is a flat array)."""
    a0 = poly.a0
    a_n, alpha_n = poly.coefficients[-1], poly.exponents[-1]

    lo = np.zeros_like(xi)
    hi = np.maximum(1.0, xi / a0)
    # s g(s) >= a0 s and s g(s) >= a_N s^(1+alpha_N), so both are upper bounds on the root.
    # s g(s) is convex, so Newton started above the root stays above it.
    s = np.minimum(xi / a0, (xi / a_n) ** (1.0 / (1.0 + alpha_n)))
    tol = rtol * np.maximum(1.0, xi)
    done = xi == 0
    s[done] = 0.0
    eps = np.finfo(float).eps

    for _ in range(ROOT_MAX_ITER):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        si = s[idx]
        g = _g(poly, si)
        f = si * g - xi[idx]
        ok = np.abs(f) <= tol[idx]

        hi[idx] = np.where(f > 0, si, hi[idx])
        lo[idx] = np.where(f < 0, si, lo[idx])
        with np.errstate(divide='ignore', invalid='ignore'):
            newton = si - f / (g + si * _g_prime(poly, si))
        inside = (newton > lo[idx]) & (newton < hi[idx])
        trial = np.where(inside, newton, 0.5 * (lo[idx] + hi[idx]))
        # bracket collapsed to rounding level: nothing left to gain
        stalled = (hi[idx] - lo[idx]) <= 4 * eps * hi[idx]

        finished = ok | stalled
        done[idx[finished]] = True
        s[idx] = np.where(finished, si, trial)

    if not done.all():
        worst = np.flatnonzero(~done)[0]
        residual = s[worst] * _g(poly, s[worst:worst + 1])[0] - xi[worst]
        raise NumericalError(
            'root solve for s g(s) = xi did not converge',
            xi=float(xi[worst]), bracket=(float(lo[worst]), float(hi[worst])),
            residual=float(residual), iterations=ROOT_MAX_ITER,
        )
    return s


def solve_s(law, xi):
    arr = _check_nonneg(xi, 'xi')
    s = _solve_s_array(law.poly, arr.ravel().copy(), law.root_tolerance).reshape(arr.shape)
    return _as_output(s, xi)


def _K_direct(law, xi):
    s = _solve_s_array(law.poly, xi.ravel().copy(), law.root_tolerance).reshape(xi.shape)
    return 1.0 / _g(law.poly, s)


def eval_K(law, xi):
    arr = _check_nonneg(xi, 'xi')
    if law.table is None:
        return _as_output(_K_direct(law, arr), xi)
    values = np.empty(arr.shape)
    covered = law.table.covers(arr)
    values[covered] = law.table.K(arr[covered])
    if not covered.all():
        values[~covered] = _K_direct(law, arr[~covered])
    return _as_output(values, xi)


def eval_K_prime(law, xi):
    """dK/dxi by implicit differentiation: s' = 1/(g + s g'), K' = -g' s' / g^2."""
    arr = _check_nonneg(xi, 'xi')
    s = _solve_s_array(law.poly, arr.ravel().copy(), law.root_tolerance).reshape(arr.shape)
    g = _g(law.poly, s)
    gp = _g_prime(law.poly, s)
    at_origin = s == 0
    with np.errstate(divide='ignore', invalid='ignore'):
        slope = np.where(at_origin, 1.0 / law.poly.a0, 1.0 / (g + s * gp))
        kp = np.where(at_origin, -gp / law.poly.a0 ** 3, -gp * slope / g ** 2)
    return _as_output(kp, xi)


def _quad(func, lower, upper, rtol):
    result = integrate.quad(func, lower, upper, epsabs=0.0, epsrel=rtol, limit=500, full_output=1)
    if len(result) > 3:
        raise NumericalError('quadrature did not converge', interval=(lower, upper),
                             abserr=result[1], message=result[3])
    return result[0]


def _H_scalar(law, xi):
    if xi == 0:
        return 0.0
    poly, rtol = law.poly, law.root_tolerance

    def K(u):
        return 1.0 / _g(poly, _solve_s_array(poly, np.array([u]), rtol))[0]

    # u = sqrt(s) below s = 1: K(sqrt(s)) has an unbounded derivative at 0 when alpha_1 < 1
    head = _quad(lambda u: 2.0 * u * K(u), 0.0, min(xi, 1.0), law.quadrature_tolerance)
    if xi <= 1.0:
        return head
    # s = e^w on [1, xi^2]
    tail = _quad(lambda w: K(np.exp(0.5 * w)) * np.exp(w), 0.0, 2.0 * np.log(xi), law.quadrature_tolerance)
    return head + tail


def eval_H(law, xi):
    """H(xi) = int_0^{xi^2} K(sqrt(s)) ds by adaptive quadrature."""
    arr = _check_nonneg(xi, 'xi')
    values = np.array([_H_scalar(law, float(v)) for v in arr.ravel()]).reshape(arr.shape)
    return _as_output(values, xi)


def eval_H_grid(law, xi, nodes=H_GRID_NODES):
    """Vectorized H for grid functionals: fixed Gauss-Legendre in u = sqrt(s) on [0, min(xi, 1)]
    and in w = log(s) on [0, 2 log(xi)]."""
    arr = _check_nonneg(xi, 'xi')
    flat = arr.ravel()
    x, w = np.polynomial.legendre.leggauss(nodes)

    def nodes_on(lower, upper):
        half = 0.5 * (upper - lower)
        return half, lower[:, None] + half[:, None] * (x[None, :] + 1.0)

    head_half, u = nodes_on(np.zeros_like(flat), np.minimum(flat, 1.0))
    total = head_half * np.sum(w[None, :] * 2.0 * u * eval_K(law, u), axis=1)
    beyond = flat > 1.0
    if beyond.any():
        tail_half, logs = nodes_on(np.zeros(beyond.sum()), 2.0 * np.log(flat[beyond]))
        total[beyond] += tail_half * np.sum(w[None, :] * eval_K(law, np.exp(0.5 * logs)) * np.exp(logs), axis=1)
    return _as_output(total.reshape(arr.shape), xi)


@dataclass(frozen=True)
class BoundFit:
    d1: float
    d2: float
    d3: float
    xi_max: float
    samples: int


def fit_bounds(law, xi_max, samples):
    """Fit d1, d2 with d1 <= K(xi)(1+xi)^a <= d2 and d3 with d3 (xi^(2-a) - 1) <= K(xi) xi^2."""
    if not xi_max > 0:
        raise DomainError(f'xi_max must be positive, got {xi_max!r}')
    if samples < 100:
        raise DomainError(f'fit_bounds needs at least 100 samples, got {samples}')

    a = law.a
    xi = np.concatenate(([0.0], np.geomspace(min(1e-6, xi_max / 10.0), xi_max, samples - 1)))
    K = eval_K(law, xi)
    scaled = K * (1.0 + xi) ** a
    d1, d2 = float(scaled.min()), float(scaled.max())

    tail = xi ** (2.0 - a) > 2.0
    if not tail.any():
        raise DomainError(f'xi_max={xi_max!r} too small to fit d3 (need xi^(2-a) > 2)')
    d3 = float(np.min(K[tail] * xi[tail] ** 2 / np.maximum(xi[tail] ** (2.0 - a) - 1.0, 1e-12)))

    fitted = BoundFit(d1, d2, d3, float(xi_max), int(samples))
    if not all(np.isfinite(v) and v > 0 for v in (d1, d2, d3)):
        raise InvariantViolation(f'degenerate bound constants for {law.poly}: {fitted}')
    logger.debug('fitted bounds %s', fitted)
    return fitted


def build_table(law, xi_max, breakpoints, probes, seed, max_breakpoints):
    rng = np.random.default_rng(seed)
    w_max = np.log1p(xi_max)
    probe_w = rng.uniform(0.0, w_max, probes)
    exact = _K_direct(law, np.expm1(probe_w))

    count = breakpoints
    error = np.inf
    while count <= max_breakpoints:
        w = np.linspace(0.0, w_max, count)
        spline = CubicSpline(w, np.log(_K_direct(law, np.expm1(w))))
        error = float(np.max(np.abs(np.exp(spline(probe_w)) - exact) / exact))
        if error < TABLE_TOLERANCE:
            logger.info('K lookup table certified: %d breakpoints, max rel error %.3g', count, error)
            return KTable(float(xi_max), count, spline, error)
        count *= 2
    raise NumericalError('lookup table could not be certified', certified_error=error,
                         breakpoints=count // 2)
