"""Norms and data functionals used by the a-priori estimates.

Per-step functionals are evaluated on a ScalarField plus the boundary extension Psi and
recorded under stable ids (the CSV headers of series.csv). Window quantities are derived
afterwards from the recorded series.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import AdmissibilityError, DomainError, RegistryError
from .constitutive import eval_H_grid, eval_K
from .discretization import boundary_gradient_magnitudes, cell_gradient

logger = logging.getLogger(__name__)


def _lp(values, alpha, volume):
    values = np.abs(np.asarray(values, dtype=float))
    if math.isinf(alpha):
        return float(values.max(initial=0.0))
    return float(np.sum(values ** alpha) * volume) ** (1.0 / alpha)


def lp_norm(field, alpha):
    """(sum |u|^alpha h^n)^(1/alpha); alpha = inf gives the sup norm."""
    if not alpha > 0:
        raise DomainError(f'norm exponent must be positive, got {alpha!r}')
    return _lp(field.values, alpha, field.grid.cell_volume)


def sup_norm(field):
    return float(np.max(np.abs(field.values)))


def gradient_magnitude(field, boundary=None):
    comps = cell_gradient(field, boundary)
    return np.sqrt(sum(c ** 2 for c in comps))


def grad_ls_norm(field, boundary, s):
    if not s > 0:
        raise DomainError(f'norm exponent must be positive, got {s!r}')
    return _lp(gradient_magnitude(field, boundary), s, field.grid.cell_volume)


def boundary_sup_grad(field, boundary):
    return float(max(m.max() for m in boundary_gradient_magnitudes(field, boundary)))


def _psi_gradient_magnitude(boundary, coords, t):
    return np.sqrt(sum(g ** 2 for g in boundary.gradient(*coords, t=t)))


def compute_A(boundary, alpha, t, grid, a):
    """A(alpha, t) by midpoint quadrature of |grad Psi| and |Psi_t| on the cells."""
    if alpha < 1:
        raise DomainError(f'A(alpha, t) needs alpha >= 1, got {alpha!r}')
    coords = grid.cell_centers()
    vol = grid.cell_volume
    grad_term = np.sum(_psi_gradient_magnitude(boundary, coords, t) ** (alpha * (2 - a) / 2)) * vol
    time_term = np.sum(np.abs(boundary.time_derivative(*coords, t=t)) ** alpha) * vol
    return float(grad_term ** (2 * (alpha - a) / (alpha * (2 - a)))
                 + time_term ** ((alpha - a) / (alpha * (1 - a))))


def r0_exponent(a, n):
    return n * (2 - a) / ((2 - a) * (n + 1) - n)


def compute_G(boundary, t, which, grid, a):
    if which not in (1, 2, 3):
        raise DomainError(f'G index must be 1, 2 or 3, got {which!r}')
    if which == 3:
        return compute_G(boundary, t, 1, grid, a) + compute_G(boundary, t, 2, grid, a)

    coords = grid.cell_centers()
    vol = grid.cell_volume
    psi_t = np.abs(boundary.time_derivative(*coords, t=t))
    if which == 1:
        r0 = r0_exponent(a, grid.n)
        grad_sq = np.sum(_psi_gradient_magnitude(boundary, coords, t) ** 2) * vol
        psi_t_r0 = np.sum(psi_t ** r0) * vol
        return float(grad_sq + psi_t_r0 ** ((2 - a) / (r0 * (1 - a))) + psi_t_r0 ** (1 / r0))
    grad_t_sq = sum(g ** 2 for g in boundary.gradient_t(*coords, t=t))
    return float(np.sum(grad_t_sq) * vol + np.sum(psi_t ** 2) * vol)


def env(values):
    """Running maximum: the smallest nondecreasing majorant of the samples."""
    return np.maximum.accumulate(np.asarray(values, dtype=float))


env_A = env


def tail_window(times, fraction=0.25, width=None):
    times = np.asarray(times, dtype=float)
    t_end = float(times[-1])
    width = fraction * (t_end - float(times[0])) if width is None else width
    return t_end - width, t_end


def compute_beta(times, values, window):
    """max over the window of the negative part of the difference quotient of A."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    inside = (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
    if inside.sum() < 3:
        raise DomainError(f'beta needs at least 3 samples in the tail window {window}')
    slope = np.diff(values[inside]) / np.diff(times[inside])
    return float(max(np.max(-slope), 0.0))


def smoothness_diagnostic(times, values):
    """max |A''| from repeated finite differences; large values flag a non-C^1 A(alpha, .)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 3:
        return 0.0
    second = np.gradient(np.gradient(values, times), times)
    return float(np.max(np.abs(second)))


def U_cal(s, d0, a):
    if s < 1:
        raise DomainError(f'U(s) is defined for s >= 1, got {s!r}')
    if s <= 3 - a:
        return 0.0
    return float(d0 + d0 ** ((s - 1) / (2 - a) + 0.5))


@dataclass(frozen=True)
class ExponentBundle:
    a: float
    n: int
    alpha: float
    p1: float
    s0: float
    alpha_star: float
    alpha_hat: float
    r0: float
    r1: float
    q1: float
    delta1: float
    delta2: float
    delta3: float
    delta4: float
    z1: float
    z2: float
    z3: float
    mu0: float
    s0_star: float
    s1: float
    s2: float
    s3: float
    nu0: float
    nu1: float
    s2_tilde: float
    kappa1: float
    kappa2: float
    kappa3: float
    kappa4: float
    kappa5: float
    kappa6: float

    @property
    def aq(self):
        """Exponent alpha q1 of the Psi norms (inf when p1 = 1)."""
        return math.inf if math.isinf(self.q1) else self.alpha * self.q1

    def rho(self, r):
        return 4 * (1 - 1 / sobolev_conjugate(r, self.n))

    def s_tilde(self, s):
        return s_tilde(s, self.a)


def sobolev_conjugate(r, n):
    if not r < n:
        raise DomainError(f'r* = nr/(n-r) needs r < n, got r={r!r}, n={n}')
    return n * r / (n - r)


def s_tilde(s, a):
    if s < 2 - a:
        raise DomainError(f's~ is defined for s >= 2-a, got {s!r}')
    if s <= 3 * (2 - a):
        return max((s + a) / 2, s / (2 - a) - 1)
    return s / (2 - a)


def admissibility_violations(a, n, alpha, p1, s0):
    problems = []
    if not 0 < a < 1:
        problems.append(f'a={a!r} must lie in (0, 1)')
        return problems
    if n < 1:
        problems.append(f'n={n!r} must be a positive dimension')
        return problems
    alpha_star = a * n / (2 - a)
    if alpha < 2:
        problems.append(f'alpha={alpha!r} must be >= 2')
    if not alpha > alpha_star:
        problems.append(f'alpha={alpha!r} must exceed alpha*={alpha_star!r}')
    if not 2 * n / (n + 2) < s0 < 2:
        problems.append(f's0={s0!r} must lie in ({2 * n / (n + 2)!r}, 2)')
    if not s0 < n:
        problems.append(f's0={s0!r} must be below n={n} for s0* to exist')
    r1 = alpha * (1 + (2 - a) / n) - a
    if not 1 <= p1 < r1 / alpha:
        problems.append(f'p1={p1!r} must lie in [1, r1/alpha) = [1, {r1 / alpha!r})')
    return problems


def exponent_bundle(a, n, alpha, p1=1.0, s0=1.5):
    violations = admissibility_violations(a, n, alpha, p1, s0)
    if violations:
        raise AdmissibilityError(violations)

    r1 = alpha * (1 + (2 - a) / n) - a
    d1 = 1 - alpha / r1
    d2 = alpha / (alpha - a) - alpha / r1
    d3 = 1 / p1 - alpha / r1
    d4 = alpha / ((alpha - a) * p1) - alpha / r1
    mu0 = 2 / (2 - a)
    s0_star = sobolev_conjugate(s0, n)
    s1 = 1 / (1 - 2 / s0_star)
    s2 = max(2.0, a * s0 / (2 - s0)) + 1
    s3 = s1 * (2 - s0) / s0 + 1
    z3 = max(1.0, d2 / (1 + d3))
    s2t = s_tilde(s2, a)
    k1 = max(2 * mu0, 1 + 2 / d1)
    k3 = s2t * z3 + alpha / 2
    return ExponentBundle(
        a=a, n=n, alpha=alpha, p1=p1, s0=s0,
        alpha_star=a * n / (2 - a),
        alpha_hat=max(alpha, 2.0, a * n / (2 - a)),
        r0=r0_exponent(a, n),
        r1=r1,
        q1=math.inf if p1 == 1 else p1 / (p1 - 1),
        delta1=d1, delta2=d2, delta3=d3, delta4=d4,
        z1=(alpha - 1) / ((alpha - a) * (1 + d4)),
        z2=alpha / ((alpha - a) * (1 + d4)),
        z3=z3,
        mu0=mu0,
        s0_star=s0_star,
        s1=s1, s2=s2, s3=s3,
        nu0=4 * (1 - 1 / s0_star),
        nu1=s3 - 1,
        s2_tilde=s2t,
        kappa1=k1,
        kappa2=1 + s1 + s2t * k1 * s3,
        kappa3=k3,
        kappa4=1 + s1 + s2t * k1 * (s3 - 1),
        kappa5=(s2t * z3 + 1) * (s3 - 1) + 1,
        kappa6=k3 * (s3 - 1) + alpha / 2,
    )


# per-step functional ids, in series.csv column order
STEP_IDS = (
    'p_min', 'p_max', 'sup_p', 'sup_pbar', 'pbar_L2', 'pbar_Lalpha',
    'grad_L2', 'grad_Linf', 'bdry_grad_sup', 'pt_L2', 'pt_Linf', 'pbar_t_L2',
    'H_int', 'A_alpha', 'G1', 'G2', 'G3', 'lambda_density',
    'psi_sup', 'psi_t_sup', 'grad_psi_sup', 'hess_psi_sup', 'psi_t_bdry_sup',
    'psi_bdry_min', 'psi_bdry_max', 'grad_psi_Laq', 'psi_t_Laq',
)

DERIVED_IDS = (
    'EnvA', 'lambda', 'D_cal', 'd0', 'int_G1', 'int_G3', 'int_H', 'int_pbar_t_sq',
    'K1_cal', 'K2_cal',
)


def grad_ls_id(s):
    return f'grad_L{s:g}'


@dataclass(frozen=True)
class FunctionalSettings:
    tracked: tuple | None = None
    alpha: float = 4.0
    p1: float = 1.0
    s0: float = 1.5
    s_values: tuple = (3.0,)
    tail_fraction: float = 0.25

    def step_ids(self):
        extra = tuple(grad_ls_id(s) for s in self.s_values)
        known = STEP_IDS + extra
        if self.tracked is None:
            return known
        unknown = [i for i in self.tracked if i not in known]
        if unknown:
            raise RegistryError(f'unknown functional id(s): {", ".join(unknown)}', column=unknown[0])
        return tuple(i for i in known if i in self.tracked)

    def bundle(self, a, n):
        return exponent_bundle(a, n, self.alpha, self.p1, self.s0)


class StepContext:
    """Lazily evaluated pieces shared by the per-step functionals of one state."""

    def __init__(self, state, pt, boundary, law, settings):
        self.state = state
        self.pt = np.asarray(pt, dtype=float)
        self.boundary = boundary
        self.law = law
        self.settings = settings
        self.grid = state.grid
        self.t = state.time
        self.volume = state.grid.cell_volume

    @cached_property
    def coords(self):
        return self.grid.cell_centers()

    @cached_property
    def psi(self):
        return self.boundary.value(*self.coords, t=self.t)

    @cached_property
    def psi_t(self):
        return self.boundary.time_derivative(*self.coords, t=self.t)

    @cached_property
    def grad_psi(self):
        return _psi_gradient_magnitude(self.boundary, self.coords, self.t)

    @cached_property
    def hess_psi(self):
        entries = self.boundary.hessian_entries(*self.coords, t=self.t)
        return np.sqrt(sum(h ** 2 for row in entries for h in row))

    @cached_property
    def pbar(self):
        return self.state.values - self.psi

    @cached_property
    def grad(self):
        return gradient_magnitude(self.state, self.boundary)

    @cached_property
    def boundary_faces(self):
        return [self.grid.boundary_face_centers(d, side) for d in range(self.grid.n) for side in (0, 1)]

    def boundary_extremes(self, fn):
        return [fn(*coords, t=self.t) for coords in self.boundary_faces]

    def norm(self, values, exponent):
        return _lp(values, exponent, self.volume)

    @property
    def a(self):
        return self.law.a


def _lambda_density(ctx):
    exponent = ctx.a * ctx.settings.s0 / (2 - ctx.settings.s0)
    return float(np.sum((1 + ctx.grad) ** exponent) * ctx.volume)


def _aq(ctx):
    p1 = ctx.settings.p1
    return math.inf if p1 == 1 else ctx.settings.alpha * p1 / (p1 - 1)


STEP_FUNCTIONALS = {
    'p_min': lambda c: float(c.state.values.min()),
    'p_max': lambda c: float(c.state.values.max()),
    'sup_p': lambda c: sup_norm(c.state),
    'sup_pbar': lambda c: float(np.max(np.abs(c.pbar))),
    'pbar_L2': lambda c: c.norm(c.pbar, 2),
    'pbar_Lalpha': lambda c: c.norm(c.pbar, c.settings.alpha),
    'grad_L2': lambda c: c.norm(c.grad, 2),
    'grad_Linf': lambda c: float(c.grad.max()),
    'bdry_grad_sup': lambda c: boundary_sup_grad(c.state, c.boundary),
    'pt_L2': lambda c: c.norm(c.pt, 2),
    'pt_Linf': lambda c: float(np.max(np.abs(c.pt))),
    'pbar_t_L2': lambda c: c.norm(c.pt - c.psi_t, 2),
    'H_int': lambda c: float(np.sum(eval_H_grid(c.law, c.grad)) * c.volume),
    'A_alpha': lambda c: compute_A(c.boundary, c.settings.alpha, c.t, c.grid, c.a),
    'G1': lambda c: compute_G(c.boundary, c.t, 1, c.grid, c.a),
    'G2': lambda c: compute_G(c.boundary, c.t, 2, c.grid, c.a),
    'G3': lambda c: compute_G(c.boundary, c.t, 3, c.grid, c.a),
    'lambda_density': _lambda_density,
    'psi_sup': lambda c: float(np.max(np.abs(c.psi))),
    'psi_t_sup': lambda c: float(np.max(np.abs(c.psi_t))),
    'grad_psi_sup': lambda c: float(c.grad_psi.max()),
    'hess_psi_sup': lambda c: float(c.hess_psi.max()),
    'psi_t_bdry_sup': lambda c: float(max(np.max(np.abs(v)) for v in c.boundary_extremes(c.boundary.time_derivative))),
    'psi_bdry_min': lambda c: float(min(np.min(v) for v in c.boundary_extremes(c.boundary.value))),
    'psi_bdry_max': lambda c: float(max(np.max(v) for v in c.boundary_extremes(c.boundary.value))),
    'grad_psi_Laq': lambda c: c.norm(c.grad_psi, _aq(c)),
    'psi_t_Laq': lambda c: c.norm(c.psi_t, _aq(c)),
}


def evaluate_step(state, pt, boundary, law, settings, ids=None):
    """Values of the tracked per-step functionals, keyed by id."""
    ctx = StepContext(state, pt, boundary, law, settings)
    values = {}
    for key in settings.step_ids() if ids is None else ids:
        if key.startswith('grad_L') and key not in STEP_FUNCTIONALS:
            s = float(key[len('grad_L'):])
            values[key] = ctx.norm(ctx.grad, s)
        else:
            values[key] = STEP_FUNCTIONALS[key](ctx)
    return values


@dataclass(frozen=True, eq=False)
class FunctionalSeries:
    """Named time series sharing one time axis."""

    times: np.ndarray
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise DomainError('functional series time stamps must be strictly increasing')
        object.__setattr__(self, 'times', times)

    def __contains__(self, key):
        return key in self.columns

    def column(self, key):
        if key not in self.columns:
            raise RegistryError(f'missing functional column {key!r}', column=key)
        return np.asarray(self.columns[key], dtype=float)

    def at(self, key, t):
        """Sample at the last recorded time not after t."""
        idx = max(int(np.searchsorted(self.times, t + 1e-12, side='right')) - 1, 0)
        return float(self.column(key)[idx])

    def mask(self, t0, t1):
        inside = (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)
        if not inside.any():
            nearest = int(np.argmin(np.abs(self.times - t1)))
            inside[nearest] = True
        return inside

    def window_sup(self, key, t0, t1):
        return float(np.max(self.column(key)[self.mask(t0, t1)]))

    def window_integral(self, key, t0, t1, power=1.0):
        inside = self.mask(t0, t1)
        if inside.sum() < 2:
            return 0.0
        return float(np.trapezoid(self.column(key)[inside] ** power, self.times[inside]))

    def cumulative_integral(self, key, power=1.0):
        values = self.column(key) ** power
        steps = 0.5 * (values[1:] + values[:-1]) * np.diff(self.times)
        return np.concatenate(([0.0], np.cumsum(steps)))

    def spacetime_norm(self, key, t0, t1, exponent):
        """||u||_{L^e(U x (t0, t1))} from per-step spatial L^e norms; e = inf is the window sup."""
        if math.isinf(exponent):
            return self.window_sup(key, t0, t1)
        return self.window_integral(key, t0, t1, power=exponent) ** (1.0 / exponent)


def lambda_quantity(series, t0, t1, s0):
    return series.window_integral('lambda_density', t0, t1) ** ((2 - s0) / s0)


def d0_and_D(series, T0, T, theta):
    """(d0, D) over the window [T0 + theta T / 2, T0 + T]."""
    start, end = T0 + theta * T / 2, T0 + T
    N0 = series.window_sup('sup_p', start, end)
    Mb = series.window_sup('bdry_grad_sup', start, end)
    return N0 ** 4 * (theta * T) ** -2 + Mb ** 4, N0 ** 2 / (theta * T) + Mb ** 2


def _psi_sup_combo(series, t0, t1, mu):
    combo = (series.column('psi_sup') + series.column('psi_t_sup') ** mu
             + series.column('grad_psi_sup') ** 2 + series.column('hess_psi_sup'))
    return float(np.max(combo[series.mask(t0, t1)]))


def psi_norm_sum(series, bundle, t0, t1):
    """||grad Psi||_{L^{aq}(Q)} + ||Psi_t||_{L^{aq}(Q)} over (t0, t1)."""
    return (series.spacetime_norm('grad_psi_Laq', t0, t1, bundle.aq)
            + series.spacetime_norm('psi_t_Laq', t0, t1, bundle.aq))


def K1_cal(series, bundle, t):
    env_at = float(env(series.column('A_alpha'))[series.mask(0.0, t)][-1])
    return 1 + env_at ** (1 / (bundle.alpha - bundle.a))


def K2_cal(series, bundle, t, width=None):
    """1 + sup(|Psi| + |Psi_t|^mu0 + |grad Psi|^2 + |hess Psi|) + (Psi norms)^z2 on [t - width, t];
    width None means the whole history [0, t]."""
    t0 = 0.0 if width is None else max(t - width, 0.0)
    return (1 + _psi_sup_combo(series, t0, t, bundle.mu0)
            + psi_norm_sum(series, bundle, t0, t) ** bundle.z2)


def K1_windowed(series, bundle, t, width, beta):
    t0 = max(t - width, 0.0)
    return (1 + beta ** (1 / (bundle.alpha - 2 * bundle.a))
            + series.window_sup('A_alpha', t0, t) ** (1 / (bundle.alpha - bundle.a)))


def derived_series(series, bundle):
    """Derived time series computed from the per-step columns."""
    times = series.times
    derived = {
        'EnvA': env(series.column('A_alpha')),
        'int_G1': series.cumulative_integral('G1'),
        'int_G3': series.cumulative_integral('G3'),
        'int_H': series.cumulative_integral('H_int'),
        'int_pbar_t_sq': series.cumulative_integral('pbar_t_L2', power=2.0),
    }
    lam, d0, D, k1, k2 = [], [], [], [], []
    for t in times:
        if t <= 0:
            lam.append(0.0)
            d0.append(0.0)
            D.append(0.0)
        else:
            lam.append(lambda_quantity(series, t / 4, t, bundle.s0))
            dd, DD = d0_and_D(series, 0.0, t, 0.5)
            d0.append(dd)
            D.append(DD)
        k1.append(1 + derived['EnvA'][len(k1)] ** (1 / (bundle.alpha - bundle.a)))
        k2.append(K2_cal(series, bundle, t))
    derived.update({'lambda': np.array(lam), 'd0': np.array(d0), 'D_cal': np.array(D),
                    'K1_cal': np.array(k1), 'K2_cal': np.array(k2)})
    return derived


def tail_constants(series, bundle, fraction=0.25):
    """Finite-horizon surrogates of the limsup constants over the last `fraction` of the run."""
    window = tail_window(series.times, fraction)
    t_end = window[1]
    A = series.column('A_alpha')
    try:
        beta = compute_beta(series.times, A, window)
    except DomainError:
        logger.warning('tail window %s holds fewer than 3 samples; beta set to 0', window)
        beta = 0.0
    g1_windows = [series.window_integral('G1', max(t - 1, 0.0), t) for t in series.times[series.mask(*window)]]
    g3_windows = [series.window_integral('G3', max(t - 1, 0.0), t) for t in series.times[series.mask(*window)]]
    aq_tail = (series.column('grad_psi_Laq') + series.column('psi_t_Laq'))[series.mask(*window)]
    return {
        'window_start': window[0],
        'window_end': t_end,
        'A_tail': series.window_sup('A_alpha', *window),
        'beta_hat': beta,
        'A1_cal': 1 + series.window_sup('A_alpha', *window) ** (1 / (bundle.alpha - bundle.a)),
        'A2_cal': (1 + _psi_sup_combo(series, *window, 2 / (2 - bundle.a))
                   + float(np.max(aq_tail)) ** bundle.z2),
        'G1_cal': 1 + max(g1_windows, default=0.0),
        'G2_cal': 1 + max(g3_windows, default=0.0),
        'K1_bar': K1_windowed(series, bundle, t_end, 2.0, beta),
        'K2_bar': K2_cal(series, bundle, t_end, 2.0),
        'K1_tilde': K1_windowed(series, bundle, t_end, 3.0, beta),
        'K2_tilde': K2_cal(series, bundle, t_end, 3.0),
        'smoothness': smoothness_diagnostic(series.times, A),
    }


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Samples u(x, t_k) on a fixed grid; values has shape (len(times),) + grid.shape."""

    grid: object
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if values.shape != (times.size,) + self.grid.shape:
            raise DomainError(f'space-time samples of shape {values.shape} do not match '
                              f'{times.size} times on grid {self.grid.shape}')
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'times', times)

    @cached_property
    def grad_magnitude(self):
        h = self.grid.spacing
        axes = tuple(range(1, self.grid.n + 1))
        comps = np.gradient(self.values, *h, axis=axes, edge_order=2)
        if self.grid.n == 1:
            comps = [comps]
        return np.sqrt(sum(c ** 2 for c in comps))

    def space_integral(self, integrand):
        axes = tuple(range(1, self.grid.n + 1))
        return np.sum(integrand, axis=axes) * self.grid.cell_volume

    def spacetime_integral(self, integrand):
        per_step = self.space_integral(integrand)
        if self.times.size < 2:
            return 0.0
        return float(np.trapezoid(per_step, self.times))

    def sup_lp(self, alpha):
        return float(np.max(self.space_integral(np.abs(self.values) ** alpha))) ** (1 / alpha)

    def lp(self, exponent):
        return self.spacetime_integral(np.abs(self.values) ** exponent) ** (1 / exponent)

    def scaled(self, factor):
        return SpaceTimeField(self.grid, self.times, self.values * factor)


def double_bracket(u, alpha, a):
    """[[u]] = sup_t ||u||_{L^alpha} + (int int |u|^(alpha-2) |grad u|^(2-a))^(1/(alpha-a))."""
    energy = u.spacetime_integral(np.abs(u.values) ** (alpha - 2) * u.grad_magnitude ** (2 - a))
    return u.sup_lp(alpha) + energy ** (1 / (alpha - a))


def weighted_bracket(u, weight, T=None):
    """[[u]]_{2,W;T} = sup_t ||u||_{L^2} + (int_0^T int W |grad u|^2)^(1/2)."""
    if T is not None:
        keep = u.times <= T + 1e-12
        u = SpaceTimeField(u.grid, u.times[keep], u.values[keep])
        weight = np.asarray(weight)[keep] if np.ndim(weight) else weight
    return u.sup_lp(2) + u.spacetime_integral(weight * u.grad_magnitude ** 2) ** 0.5


def weight_from_gradient(law, u):
    """W = K(|grad u|) on the samples of u."""
    return eval_K(law, u.grad_magnitude)
