"""Numerical checks of the embedding lemmas, the De Giorgi recurrence and the run-level estimates.

Lemma checks sample ratios LHS / RHS over a corpus of space-time fields; theorem checks fit
the constants (C, C') of a registered inequality shape on training runs and test them on
held-out runs.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import AdmissibilityError, ConfigError, DomainError, PreconditionError
from .constitutive import eval_K
from .discretization import Grid
from .functionals import (
    SpaceTimeField, double_bracket, sobolev_conjugate, weighted_bracket,
)
from .theorems import THEOREMS, VerifySettings, evaluate, theorem

logger = logging.getLogger(__name__)

CONVERGED_BELOW = 1e-12
DECAY_RATIO = 0.01
DECAY_DIFFUSION_TIMES = 20.0


@dataclass(frozen=True)
class RecurrenceSpec:
    """Y_{i+1} <= sum_k A_k B^i Y_i^(1 + mu_k)."""

    A: tuple
    mu: tuple
    B: float
    Y0: float
    max_iter: int = 200

    def __post_init__(self):
        if not self.A or len(self.A) != len(self.mu):
            raise DomainError('recurrence needs matching, non-empty A and mu')
        if any(a <= 0 for a in self.A) or any(m <= 0 for m in self.mu):
            raise DomainError('recurrence coefficients A_k and exponents mu_k must be positive')
        if not self.B > 1:
            raise DomainError(f'recurrence base B must exceed 1, got {self.B}')
        if self.Y0 < 0:
            raise DomainError(f'Y0 must be non-negative, got {self.Y0}')

    @property
    def m(self):
        return len(self.A)

    @property
    def threshold(self):
        """min_k ((m A_k)^-1 B^(-1/mu))^(1/mu_k) with mu = min mu_k."""
        mu = min(self.mu)
        return min((self.B ** (-1 / mu) / (self.m * a)) ** (1 / mk) for a, mk in zip(self.A, self.mu))


@dataclass(frozen=True)
class RecurrenceResult:
    sequence: np.ndarray
    converged: bool
    diverged: bool
    blowup_index: int | None
    threshold: float


def degiorgi_sequence(spec):
    """Iterate the recurrence with equality from Y0."""
    values = [float(spec.Y0)]
    blowup = None
    with np.errstate(over='ignore', invalid='ignore'):
        for i in range(spec.max_iter):
            y = np.float64(values[-1])
            nxt = sum(np.float64(a) * np.float64(spec.B) ** i * y ** (1 + mk) for a, mk in zip(spec.A, spec.mu))
            if not np.isfinite(nxt):
                blowup = i + 1
                break
            values.append(float(nxt))
    diverged = blowup is not None
    converged = not diverged and len(values) == spec.max_iter + 1 and values[-1] < CONVERGED_BELOW
    if diverged:
        logger.debug('recurrence overflowed at iterate %d (Y0=%g, threshold=%g)', blowup, spec.Y0,
                     spec.threshold)
    return RecurrenceResult(np.array(values), converged, diverged, blowup, spec.threshold)


def random_recurrence_spec(rng, fraction=0.99, max_iter=200):
    m = int(rng.integers(1, 4))
    A = tuple(float(v) for v in rng.uniform(0.1, 10.0, size=m))
    mu = tuple(float(v) for v in rng.uniform(0.2, 2.0, size=m))
    B = float(rng.uniform(2.0, 8.0))
    unscaled = RecurrenceSpec(A, mu, B, 0.0, max_iter)
    return RecurrenceSpec(A, mu, B, fraction * unscaled.threshold, max_iter)


def random_recurrence_specs(count, seed, fraction=0.99, max_iter=200):
    rng = np.random.default_rng(seed)
    return [random_recurrence_spec(rng, fraction, max_iter) for _ in range(count)]


@dataclass(frozen=True)
class CorpusMember:
    """u(x, t) = amplitude * sum_j (a_j + b_j t / T) phi_j(x), with sine modes when homogeneous."""

    modes: np.ndarray
    a: np.ndarray
    b: np.ndarray
    homogeneous: bool
    amplitude: float = 1.0
    offset: float = 0.0

    def sample(self, grid, times):
        times = np.asarray(times, dtype=float)
        horizon = max(float(times[-1]), 1e-12)
        centers = grid.cell_centers()
        values = np.zeros((times.size,) + grid.shape)
        for k, a, b in zip(self.modes, self.a, self.b):
            shape = np.ones(grid.shape)
            for d in range(grid.n):
                arg = k[d] * math.pi * centers[d] / grid.extents[d]
                shape = shape * (np.sin(arg) if self.homogeneous else np.cos(arg))
            values += (a + b * times / horizon)[(slice(None),) + (None,) * grid.n] * shape
        if not self.homogeneous:
            values += self.offset
        return SpaceTimeField(grid, times, self.amplitude * values)


def corpus_members(size, seed, dim, homogeneous=True, max_mode=4, amplitudes=(0.1, 1.0, 10.0)):
    rng = np.random.default_rng(seed)
    low = 1 if homogeneous else 0
    members = []
    for _ in range(size):
        count = int(rng.integers(1, 4))
        members.append(CorpusMember(
            modes=rng.integers(low, max_mode + 1, size=(count, dim)),
            a=rng.normal(size=count),
            b=rng.normal(size=count),
            homogeneous=homogeneous,
            amplitude=float(rng.choice(amplitudes)),
            offset=float(rng.normal()),
        ))
    return members


def smooth_corpus(grid, times, size=50, seed=0, homogeneous=True):
    """Reproducible smooth space-time fields; the same seed gives the same functions on any grid."""
    return [m.sample(grid, times) for m in corpus_members(size, seed, grid.n, homogeneous)]


def solver_corpus(record, boundary=None):
    """The snapshots of a run as one space-time field, minus Psi when a boundary is given."""
    if len(record.snapshots) < 2:
        raise PreconditionError('a run corpus needs at least two snapshots')
    cells = tuple(record.meta['grid']['cells'])
    grid = Grid(cells, tuple(record.meta['grid']['extents']))
    times = np.array([s.time for s in record.snapshots])
    values = np.stack([s.values.reshape(cells) for s in record.snapshots])
    if boundary is not None:
        values = values - np.stack([boundary.on_cells(grid, t) for t in times])
    return SpaceTimeField(grid, times, values)


@dataclass
class RatioStats:
    ratios: np.ndarray
    skipped: int = 0
    label: str = ''

    @property
    def max(self):
        return float(np.max(self.ratios)) if self.ratios.size else 0.0

    @property
    def mean(self):
        return float(np.mean(self.ratios)) if self.ratios.size else 0.0

    def summary(self):
        return {'max': self.max, 'mean': self.mean, 'count': int(self.ratios.size), 'skipped': self.skipped}


def _truncate(u, T):
    if T is None:
        return u
    keep = u.times <= T + 1e-12
    return SpaceTimeField(u.grid, u.times[keep], u.values[keep])


def _check_size(corpus, min_size):
    if len(corpus) < min_size:
        raise PreconditionError(f'corpus holds {len(corpus)} fields, need at least {min_size}')


def sob4_exponent(alpha, a, n):
    return alpha * (1 + (2 - a) / n) - a


def check_sob4(corpus, alpha, a, n, T=None, homogeneous=True, min_size=50):
    """||u||_{L^p(Q_T)} / ((1 + delta T)^(1/p) [[u]]) with p = alpha (1 + (2 - a)/n) - a."""
    alpha_star = a * n / (2 - a)
    if not (0 < a < 1 and alpha >= 2 and alpha > alpha_star):
        raise AdmissibilityError([f'need 0 < a < 1, alpha >= 2 and alpha > alpha*={alpha_star:g}; '
                                  f'got a={a}, alpha={alpha}'])
    _check_size(corpus, min_size)
    p = sob4_exponent(alpha, a, n)
    delta = 0.0 if homogeneous else 1.0
    ratios, skipped = [], 0
    for u in corpus:
        u = _truncate(u, T)
        horizon = float(u.times[-1])
        bracket = double_bracket(u, alpha, a)
        if bracket == 0:
            skipped += 1
            continue
        ratios.append(u.lp(p) / ((1 + delta * horizon) ** (1 / p) * bracket))
    if skipped:
        logger.info('skipped %d corpus fields with a vanishing bracket', skipped)
    return RatioStats(np.array(ratios), skipped, 'sob4')


def _weights_for(weight, corpus):
    if weight is None:
        return [1.0] * len(corpus)
    if callable(weight):
        return [weight(u) for u in corpus]
    if len(weight) != len(corpus):
        raise DomainError(f'{len(weight)} weights for a corpus of {len(corpus)} fields')
    return list(weight)


def check_weighted_embedding(corpus, s0, n, weight=None, T=None, homogeneous=True, min_size=50):
    """||u||_{L^rho} / ([[u]]_{2,W} {delta T^(1/rho) + sup_t (int_supp W^(-r/(2-r)))^((2-r)/(rho r))})
    with r = s0 and rho = 4 (1 - 1/s0*)."""
    if not 2 * n / (n + 2) < s0 < min(2, n):
        raise AdmissibilityError([f's0={s0} must lie in ({2 * n / (n + 2):g}, {min(2, n)})'])
    _check_size(corpus, min_size)
    r = s0
    rho = 4 * (1 - 1 / sobolev_conjugate(r, n))
    delta = 0.0 if homogeneous else 1.0
    ratios, skipped = [], 0
    for u, W in zip(corpus, _weights_for(weight, corpus)):
        u = _truncate(u, T)
        W = np.broadcast_to(np.asarray(W, dtype=float)[:u.times.size] if np.ndim(W) else W, u.values.shape)
        horizon = float(u.times[-1])
        bracket = weighted_bracket(u, W)
        support = u.values != 0
        inverse = np.where(support, W, 1.0) ** (-r / (2 - r)) * support
        support_term = float(np.max(u.space_integral(inverse))) ** ((2 - r) / (rho * r))
        denominator = bracket * (delta * horizon ** (1 / rho) + support_term)
        if denominator == 0:
            skipped += 1
            continue
        ratios.append(u.lp(rho) / denominator)
    return RatioStats(np.array(ratios), skipped, 'weighted')


@dataclass(frozen=True)
class LukResult:
    lhs: float
    rhs: float

    @property
    def ratio(self):
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else math.inf
        return self.lhs / self.rhs


def _cell_derivatives(field):
    grid = field.grid
    h = grid.spacing
    first = np.gradient(field.values, *h, edge_order=2)
    if grid.n == 1:
        first = [first]
    second = []
    for comp in first:
        rows = np.gradient(comp, *h, edge_order=2)
        second.extend([rows] if grid.n == 1 else rows)
    return first, second


def _edge_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    for axis in range(len(shape)):
        index = [slice(None)] * len(shape)
        index[axis] = 0
        mask[tuple(index)] = True
        index[axis] = -1
        mask[tuple(index)] = True
    return mask


def check_luk(w, law, M, s, k=0.0, boundary_tolerance=1e-9):
    """int K v^(s+1) against max|w-k|^2 int K |hess w|^2 v^(s-1) + M^4 int K v^(s-1),
    v = (|grad w|^2 - M^2)_+, requiring |grad w| <= M on the boundary layer."""
    if s < 1:
        raise DomainError(f's must be at least 1, got {s}')
    first, second = _cell_derivatives(w)
    grad_sq = sum(c ** 2 for c in first)
    grad = np.sqrt(grad_sq)
    edge = grad[_edge_mask(grad.shape)]
    if edge.max() > M * (1 + boundary_tolerance):
        raise PreconditionError(f'|grad w| reaches {edge.max():.6g} on the boundary, above M={M:.6g}')
    K = eval_K(law, grad)
    v = np.maximum(grad_sq - M ** 2, 0.0)
    hess_sq = sum(c ** 2 for c in second)
    volume = w.grid.cell_volume
    lhs = float(np.sum(K * v ** (s + 1)) * volume)
    rhs = float(np.max(np.abs(w.values - k)) ** 2 * np.sum(K * hess_sq * v ** (s - 1)) * volume
                + M ** 4 * np.sum(K * v ** (s - 1)) * volume)
    return LukResult(lhs, rhs)


@dataclass(frozen=True)
class Stability:
    coarse: float
    fine: float

    @property
    def drift(self):
        if self.coarse == 0:
            return 0.0 if self.fine == 0 else math.inf
        return abs(self.fine - self.coarse) / abs(self.coarse)


def ratio_stability(measure, grid):
    """Compare a scalar ratio measure(grid) on grid and on its refinement."""
    return Stability(float(measure(grid)), float(measure(grid.refine())))


@dataclass
class PropertyReport:
    name: str
    complete: bool
    max_principle_margin: float | None = None
    max_principle_ok: bool | None = None
    energy_monotone: bool | None = None
    energy_increase: float | None = None
    h_integral_required: float | None = None
    h_energy_required: float | None = None
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {k: getattr(self, k) for k in ('name', 'complete', 'max_principle_margin', 'max_principle_ok',
                                               'energy_monotone', 'energy_increase', 'h_integral_required',
                                               'h_energy_required')}


def verify_run_properties(record, name='', tolerance=1e-8):
    """Discrete maximum principle, energy monotonicity for static Psi and the integral bounds."""
    series = record.series
    report = PropertyReport(name, record.complete)
    if not record.complete:
        report.notes.append(f'run incomplete: {record.error}')
    columns = ('p_min', 'p_max', 'psi_bdry_min', 'psi_bdry_max')
    if record.meta.get('source') or record.meta.get('time_variable') == 'tau':
        report.notes.append('maximum principle not checked: run has a source or the quadratic term')
    elif all(c in series for c in columns) and len(series.times) > 1:
        p_min, p_max = series.column('p_min'), series.column('p_max')
        lower = np.minimum(p_min[:-1], series.column('psi_bdry_min')[1:])
        upper = np.maximum(p_max[:-1], series.column('psi_bdry_max')[1:])
        scale = np.maximum(1.0, np.maximum(np.abs(lower), np.abs(upper)))
        margins = np.minimum(p_min[1:] - lower, upper - p_max[1:]) / scale
        report.max_principle_margin = float(np.min(margins))
        report.max_principle_ok = bool(report.max_principle_margin >= -tolerance)
        if not report.max_principle_ok:
            worst = int(np.argmin(margins)) + 1
            logger.warning('%s: maximum principle violated at step %d (margin %.3g)', name or 'run', worst,
                           margins[worst - 1])

    if record.meta.get('static_boundary') and 'pbar_L2' in series and not record.meta.get('source'):
        energy = series.column('pbar_L2') ** 2
        increase = np.diff(energy) / np.maximum(energy[:-1], 1e-300)
        report.energy_increase = float(np.max(increase)) if increase.size else 0.0
        report.energy_monotone = bool(report.energy_increase <= tolerance)

    settings = VerifySettings()
    for theorem_id, attr in (('h_integral', 'h_integral_required'), ('h_energy', 'h_energy_required')):
        if all(c in series for c in THEOREMS[theorem_id].columns) and len(series.times) > 1:
            ev = evaluate(theorem_id, series, None, settings)
            setattr(report, attr, math.exp(ev.log_required(0.0)) if ev.log_required(0.0) < 700 else math.inf)
    return report


@dataclass
class ContractionResult:
    times: np.ndarray
    gaps: np.ndarray
    monotone: bool
    worst_increase: float
    final_ratio: float
    decay_required: bool = False
    error: str | None = None

    @property
    def contracting(self):
        if self.error is not None or not self.monotone:
            return False
        return self.final_ratio < DECAY_RATIO if self.decay_required else True

    @classmethod
    def failed(cls, message):
        return cls(np.array([]), np.array([]), False, math.nan, math.nan, error=message)


def contraction_from_gaps(times, gaps, rel_tol=1e-12, abs_tol=1e-14, decay_required=False):
    times, gaps = np.asarray(times, dtype=float), np.asarray(gaps, dtype=float)
    increases = gaps[1:] - gaps[:-1] * (1 + rel_tol) - abs_tol
    worst = float(np.max(increases)) if increases.size else 0.0
    monotone = worst <= 0
    final_ratio = float(gaps[-1] / gaps[0]) if gaps[0] > 0 else 0.0
    return ContractionResult(times, gaps, monotone, worst, final_ratio, decay_required)


def comparable_meta(meta):
    meta = {k: v for k, v in meta.items() if k not in ('member', 'name')}
    if isinstance(meta.get('config'), dict):
        meta['config'] = {k: v for k, v in meta['config'].items() if k not in ('initial', 'sweep')}
    return meta


def diffusion_time(meta):
    """a0 L^2 for the longest extent L: the time unit K <= 1/a0 diffuses across the domain in."""
    return meta['polynomial']['coefficients'][0] * max(meta['grid']['extents']) ** 2


def verify_contraction(record_a, record_b, rel_tol=1e-12):
    """Max-norm gap between two runs that differ only in their initial data, at every step.

    With static boundary data and no source the gap must also fall below DECAY_RATIO of its
    initial value once the runs cover DECAY_DIFFUSION_TIMES diffusion times.
    """
    if comparable_meta(record_a.meta) != comparable_meta(record_b.meta):
        raise ConfigError('contraction runs must share every setting except the initial data')
    steps_a = [s.step for s in record_a.snapshots]
    steps_b = [s.step for s in record_b.snapshots]
    if steps_a != steps_b or not steps_a:
        raise PreconditionError('contraction runs must carry snapshots at the same steps')
    if steps_a != list(range(len(record_a.times))):
        raise PreconditionError(f'contraction is checked at every step, but the runs store {len(steps_a)} of '
                                f'{len(record_a.times)} steps (set [solver] every_step = true)')
    gaps = [float(np.max(np.abs(sa.values - sb.values)))
            for sa, sb in zip(record_a.snapshots, record_b.snapshots)]
    scale = max(1.0, max(float(np.max(np.abs(s.values))) for s in record_a.snapshots + record_b.snapshots))
    meta = record_a.meta
    decay = (bool(meta.get('static_boundary')) and not meta.get('source')
             and record_a.final_time >= DECAY_DIFFUSION_TIMES * diffusion_time(meta) - 1e-12)
    return contraction_from_gaps([s.time for s in record_a.snapshots], gaps, rel_tol,
                                 abs_tol=max(1e-14, meta.get('picard_tol', 1e-10) * scale), decay_required=decay)


@dataclass
class InequalityCheck:
    theorem_id: str
    lhs_expr: str
    rhs_expr: str
    fitted_c: float
    fitted_c_prime: float
    train_ratios: dict
    holdout_ratios: dict
    holdout_slack: float
    term_constants: dict = field(default_factory=dict)

    @property
    def train_max(self):
        return max(self.train_ratios.values(), default=0.0)

    @property
    def holdout_max(self):
        return max(self.holdout_ratios.values(), default=0.0)

    @property
    def passed(self):
        return all(r <= self.holdout_slack for r in self.holdout_ratios.values())

    def row(self):
        return {
            'theorem': self.theorem_id,
            'C': self.fitted_c,
            'C_prime': self.fitted_c_prime,
            'train_max_ratio': self.train_max,
            'holdout_max_ratio': self.holdout_max,
            'passed': self.passed,
        }


def _fit_shared(evaluations, c_prime_grid):
    best = None
    for c_prime in sorted(set(c_prime_grid)):
        logs = [ev.log_required(c_prime) for ev in evaluations.values()]
        log_c = max(logs, default=-math.inf)
        c = math.exp(log_c) if log_c < 700 else math.inf
        if math.isinf(c):
            slack = math.inf
        else:
            slack = sum(1 - ev.ratio(c, c_prime) for ev in evaluations.values())
        if best is None or slack < best[2]:
            best = (c, c_prime, slack)
    return best[0], best[1]


def _fit_per_term(evaluations):
    names = next(iter(evaluations.values())).terms.keys()
    count = len(names)
    constants = {}
    for name in names:
        constants[name] = max(
            (ev.lhs / (count * ev.terms[name]) if ev.terms[name] > 0 else (math.inf if ev.lhs > 0 else 0.0)
             for ev in evaluations.values()), default=0.0)
    return constants


def _per_term_ratio(ev, constants):
    rhs = sum(constants[k] * v for k, v in ev.terms.items())
    if ev.lhs <= 0:
        return 0.0
    return ev.lhs / rhs if rhs > 0 else math.inf


def fit_theorem_constant(theorem_id, train, holdout, bundle, settings=None):
    """Fit (C, C') on the named training series and report LHS/RHS ratios on both splits."""
    settings = settings or VerifySettings()
    shape = theorem(theorem_id)
    if not train:
        raise PreconditionError(f'{theorem_id}: empty training family')
    train_ev = {name: evaluate(theorem_id, s, bundle, settings) for name, s in train.items()}
    holdout_ev = {name: evaluate(theorem_id, s, bundle, settings) for name, s in holdout.items()}
    grid = settings.c_prime_grid if shape.has_exponential else (0.0,)

    if settings.per_term and shape.theorem_id == 'linf_window':
        constants = _fit_per_term(train_ev)
        train_ratios = {n: _per_term_ratio(ev, constants) for n, ev in train_ev.items()}
        holdout_ratios = {n: _per_term_ratio(ev, constants) for n, ev in holdout_ev.items()}
        return InequalityCheck(theorem_id, shape.lhs, shape.rhs, max(constants.values()), 0.0,
                               train_ratios, holdout_ratios, settings.holdout_slack, constants)

    c, c_prime = _fit_shared(train_ev, grid)
    check = InequalityCheck(
        theorem_id, shape.lhs, shape.rhs, c, c_prime,
        {n: ev.ratio(c, c_prime) for n, ev in train_ev.items()},
        {n: ev.ratio(c, c_prime) for n, ev in holdout_ev.items()},
        settings.holdout_slack,
    )
    logger.info('%s: C=%.6g C\'=%g train max %.4g holdout max %.4g', theorem_id, c, c_prime,
                check.train_max, check.holdout_max)
    return check


def split_family(names, train, holdout, seed):
    """Seeded split of run names into (train, holdout) lists."""
    names = sorted(names)
    if train + holdout > len(names):
        raise PreconditionError(f'cannot split {len(names)} runs into {train} training and {holdout} held-out')
    order = np.random.default_rng(seed).permutation(len(names))
    chosen = [names[i] for i in order]
    return chosen[:train], chosen[train:train + holdout]
