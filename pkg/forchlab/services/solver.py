"""Time integration of p_t = div(K(|grad p|) grad p) + f with Dirichlet data Psi.

The implicit scheme freezes K at the previous Picard iterate, so every pass solves a
symmetric M-matrix system (I + dt L) u = rhs by preconditioned conjugate gradients.
"""
import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from ..errors import ConfigError, ForchlabError, NumericalError, StepError
from .constitutive import eval_K, eval_K_prime
from .discretization import (
    Grid, ScalarField, clamp_xi, divergence, face_coefficients, nonlinear_flux,
)
from .functionals import evaluate_step, gradient_magnitude
from .records import RunRecord

logger = logging.getLogger(__name__)

SCHEMES = ('implicit-picard', 'explicit')
CFL_SAFETY = 0.45


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = 'implicit-picard'
    dt: float = 1e-3
    t_end: float = 1.0
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    linear_tol: float = 1e-12
    # f(*coords, t) on cell centres, or None
    source: object = None
    full_equation: bool = False
    kappa: float | None = None
    phi: float | None = None
    # number of snapshots per run; None stores every step
    snapshots: int | None = 32

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f'unknown scheme {self.scheme!r} (expected one of {", ".join(SCHEMES)})')
        if not self.dt > 0:
            raise ConfigError(f'dt must be positive, got {self.dt!r}')
        if not self.t_end >= 0:
            raise ConfigError(f't_end must be nonnegative, got {self.t_end!r}')
        if not (self.picard_tol > 0 and self.linear_tol > 0):
            raise ConfigError('solver tolerances must be positive')
        if self.picard_max_iter < 1:
            raise ConfigError('picard_max_iter must be at least 1')
        if self.snapshots is not None and self.snapshots < 0:
            raise ConfigError('snapshots must be nonnegative')
        if self.full_equation:
            if self.kappa is None or not self.kappa > 0:
                raise ConfigError(f'the full equation needs kappa > 0, got {self.kappa!r}')
            if self.phi is None or not 0 < self.phi < 1:
                raise ConfigError(f'the full equation needs phi in (0, 1), got {self.phi!r}')

    @property
    def nsteps(self):
        if self.t_end == 0:
            return 0
        return int(math.ceil(self.t_end / self.dt - 1e-9))

    def step_times(self, start=0.0):
        """start + m dt, with the last step shortened to land on t_end."""
        n = self.nsteps
        times = [start + min(m * self.dt, self.t_end) for m in range(n + 1)]
        if n:
            times[-1] = start + self.t_end
        return times


def cfl_limit(grid, poly):
    return CFL_SAFETY * poly.a0 * min(grid.spacing) ** 2 / (2 * grid.n)


def check_cfl(config, grid, poly):
    """Reject explicit configurations with dt above 0.45 a0 h_min^2 / (2n)."""
    limit = cfl_limit(grid, poly)
    if config.scheme == 'explicit' and config.dt > limit:
        raise ConfigError(f'explicit dt={config.dt!r} violates the CFL bound {limit:.6g} '
                          f'for h_min={min(grid.spacing):.6g}')
    return limit


def _index(ndim, axis, i):
    idx = [slice(None)] * ndim
    idx[axis] = i
    return tuple(idx)


def assemble_operator(grid, coeffs):
    """Sparse -div(K grad .) with the Dirichlet ghost closure folded into the diagonal."""
    n = grid.n
    diag = np.zeros(grid.shape)
    bands, offsets = [], []
    strides = (grid.shape[1], 1) if n == 2 else (1,)
    for d in range(n):
        cells = grid.shape[d]
        weighted = coeffs[d] / grid.spacing[d] ** 2
        weighted[_index(n, d, 0)] *= 2
        weighted[_index(n, d, -1)] *= 2
        diag += weighted[_index(n, d, slice(0, cells))] + weighted[_index(n, d, slice(1, cells + 1))]

        band = np.zeros(grid.shape)
        band[_index(n, d, slice(0, cells - 1))] = -weighted[_index(n, d, slice(1, cells))]
        flat = band.ravel()[:grid.size - strides[d]]
        bands += [flat, flat]
        offsets += [strides[d], -strides[d]]
    return sparse.diags([diag.ravel()] + bands, [0] + offsets, format='csr')


def boundary_load(grid, coeffs, face_values):
    """Contribution 2 K psi / h^2 of the Dirichlet ghosts on the boundary cells."""
    n = grid.n
    load = np.zeros(grid.shape)
    for d in range(n):
        h2 = grid.spacing[d] ** 2
        for i, psi in zip((0, -1), face_values[d]):
            load[_index(n, d, i)] += 2 * coeffs[d][_index(n, d, i)] * psi / h2
    return load


def solve_spd(matrix, rhs, x0, tol):
    if not np.any(rhs):
        return np.zeros_like(rhs)
    jacobi = sparse.diags(1.0 / matrix.diagonal())
    x, info = cg(matrix, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=max(10 * rhs.size, 200), M=jacobi)
    if info > 0:
        residual = float(np.linalg.norm(rhs - matrix @ x) / np.linalg.norm(rhs))
        raise NumericalError('conjugate gradients did not converge', iterations=info, residual=residual)
    if info < 0:
        raise NumericalError('conjugate gradient breakdown', info=info)
    return x


def _source_values(config, grid, t):
    if config.source is None:
        return 0.0
    return config.source(*grid.cell_centers(), t)


def quadratic_term(state, law, boundary):
    """K(|grad p|) |grad p|^2 on the cells (pointwise nonnegative)."""
    xi = clamp_xi(gradient_magnitude(state, boundary))
    return eval_K(law, xi) * xi ** 2


def step_implicit(state, law, boundary, dt, config=SolverConfig(), step=0, explicit=None):
    """Backward Euler with Picard iteration on the frozen coefficient."""
    grid = state.grid
    t_new = state.time + dt
    faces = boundary.face_values(grid, t_new)
    rhs = state.values + dt * _source_values(config, grid, t_new)
    if explicit is not None:
        rhs = rhs + dt * explicit
    identity = sparse.identity(grid.size, format='csr')

    u = state.values.copy()
    update = math.inf
    for k in range(1, config.picard_max_iter + 1):
        coeffs = face_coefficients(ScalarField(grid, u, t_new), law, faces)
        system = identity + dt * assemble_operator(grid, coeffs)
        b = (rhs + dt * boundary_load(grid, coeffs, faces)).ravel()
        try:
            new = solve_spd(system, b, u.ravel(), config.linear_tol).reshape(grid.shape)
        except NumericalError as e:
            raise StepError(f'linear solve failed: {e}', step) from e
        update = float(np.max(np.abs(new - u)) / max(np.max(np.abs(new)), 1.0))
        u = new
        if update < config.picard_tol:
            logger.debug('step %d: Picard converged in %d iterations (update %.3g)', step, k, update)
            return ScalarField(grid, u, t_new)
    raise StepError('Picard iteration did not converge', step, residual=update,
                    iterations=config.picard_max_iter)


def step_explicit(state, law, boundary, dt, config=None, step=0, explicit=None):
    config = replace(config or SolverConfig(), scheme='explicit', dt=dt)
    check_cfl(config, state.grid, law.poly)
    rate = -divergence(nonlinear_flux(state, law, boundary)).values + _source_values(config, state.grid, state.time)
    if explicit is not None:
        rate = rate + explicit
    values = state.values + dt * rate
    if not np.all(np.isfinite(values)):
        raise StepError('explicit update produced non-finite values', step)
    return ScalarField(state.grid, values, state.time + dt)


class Integrator:
    """Advances one state by one step with the configured scheme and equation."""

    def __init__(self, config, law, boundary):
        self.config = config
        self.law = law
        self.boundary = boundary
        self.kappa = config.kappa if config.full_equation else None

    def explicit_part(self, state):
        if self.kappa is None:
            return None
        return quadratic_term(state, self.law, self.boundary) / self.kappa

    def rate(self, state):
        """p_t implied by the equation at the current state."""
        flux = nonlinear_flux(state, self.law, self.boundary)
        rate = -divergence(flux).values + _source_values(self.config, state.grid, state.time)
        extra = self.explicit_part(state)
        return rate if extra is None else rate + extra

    def step(self, state, t_new, step):
        dt = t_new - state.time
        extra = self.explicit_part(state)
        if self.config.scheme == 'explicit':
            new = step_explicit(state, self.law, self.boundary, dt, self.config, step, extra)
        else:
            new = step_implicit(state, self.law, self.boundary, dt, self.config, step, extra)
        return ScalarField(new.grid, new.values, t_new)


def snapshot_steps(nsteps, count):
    if count is None:
        return set(range(nsteps + 1))
    if count == 0:
        return set()
    return {int(s) for s in np.round(np.linspace(0, nsteps, count + 1)).astype(int)}


def run_meta(config, law, grid, boundary, extra=None):
    meta = {
        'scheme': config.scheme,
        'dt': config.dt,
        't_end': config.t_end,
        'polynomial': {'exponents': list(law.poly.exponents), 'coefficients': list(law.poly.coefficients)},
        'grid': {'cells': list(grid.shape), 'extents': list(grid.extents)},
        'static_boundary': bool(boundary.is_static),
        'time_variable': 't',
        'source': config.source is not None,
        'picard_tol': config.picard_tol,
    }
    if config.full_equation:
        meta.update(time_variable='tau', kappa=config.kappa, phi=config.phi,
                    physical_time_factor=config.phi / config.kappa)
    meta.update(extra or {})
    return meta


def _march(config, law, initial_states, boundary, settings, meta, on_step=None):
    grid = initial_states[0].grid
    check_cfl(config, grid, law.poly)
    integrator = Integrator(config, law, boundary)
    ids = settings.step_ids() if settings is not None else ()
    records = [RunRecord(dict(meta, member=i) if len(initial_states) > 1 else dict(meta), ids)
               for i in range(len(initial_states))]
    times = config.step_times(initial_states[0].time)
    snaps = snapshot_steps(len(times) - 1, config.snapshots)
    states = list(initial_states)
    started = time.perf_counter()

    def observe(m, state, pt, record):
        if ids:
            record.append(state.time, evaluate_step(state, pt, boundary, law, settings, ids))
        else:
            record.append(state.time, {})
        if m in snaps:
            record.add_snapshot(m, state.time, state.values)

    try:
        for state, record in zip(states, records):
            observe(0, state, integrator.rate(state), record)
        if on_step is not None:
            on_step(0, states)
        for m in range(1, len(times)):
            for i, state in enumerate(states):
                new = integrator.step(state, times[m], m)
                observe(m, new, (new.values - state.values) / (new.time - state.time), records[i])
                states[i] = new
            if on_step is not None:
                on_step(m, states)
            if m % max(1, (len(times) - 1) // 10) == 0:
                logger.debug('step %d/%d t=%.6g', m, len(times) - 1, times[m])
    except ForchlabError as e:
        for record in records:
            record.mark_incomplete(str(e))
            record.wall_seconds = time.perf_counter() - started
        e.record = records[0]
        e.records = records
        raise

    elapsed = time.perf_counter() - started
    for record in records:
        record.complete = True
        record.wall_seconds = elapsed
    logger.info('integrated %d step(s) to t=%.6g in %.2fs', len(times) - 1, times[-1], elapsed)
    return records, states


def run_ibvp(config, law, p0, boundary, settings=None, meta=None):
    if config.full_equation:
        raise ConfigError('run_ibvp integrates the reduced equation; use run_full_equation for full_equation = true')
    meta = run_meta(config, law, p0.grid, boundary, meta)
    records, _ = _march(config, law, [p0], boundary, settings, meta)
    return records[0]


def run_full_equation(config, law, p0, boundary, settings=None, meta=None):
    """phi p_t = kappa div(K grad p) + K |grad p|^2 in the rescaled time tau = kappa t / phi:
    p_tau = div(K grad p) + K |grad p|^2 / kappa, the quadratic term taken explicitly."""
    if not config.full_equation:
        raise ConfigError('run_full_equation needs [solver] full_equation = true with kappa and phi')
    meta = run_meta(config, law, p0.grid, boundary, meta)
    records, _ = _march(config, law, [p0], boundary, settings, meta)
    return records[0]


@dataclass(frozen=True, eq=False)
class PairResult:
    records: tuple
    times: np.ndarray
    gaps: np.ndarray


def run_pair(config, law, p0_a, p0_b, boundary, settings=None, meta=None):
    """Advance two initial data with identical boundary data; gaps[m] = max |p_a - p_b| at step m."""
    if p0_a.grid != p0_b.grid or p0_a.time != p0_b.time:
        raise ConfigError('run pairs need initial data on the same grid at the same time')
    meta = run_meta(config, law, p0_a.grid, boundary, meta)
    gaps = []
    times = []

    def track(m, states):
        times.append(states[0].time)
        gaps.append(float(np.max(np.abs(states[0].values - states[1].values))))

    records, _ = _march(config, law, [p0_a, p0_b], boundary, settings, meta, on_step=track)
    return PairResult(tuple(records), np.array(times), np.array(gaps))


def random_initial(grid, seed, kind='smooth', amplitude=1.0, modes=4, offset=0.0):
    """Seeded random initial data: a sum of low sine modes, or independent cell values."""
    rng = np.random.default_rng(seed)
    if kind == 'cellwise':
        values = rng.uniform(-1.0, 1.0, grid.shape)
    elif kind == 'smooth':
        coords = grid.cell_centers()
        values = np.zeros(grid.shape)
        for ks in np.ndindex(*(modes,) * grid.n):
            mode = np.ones(grid.shape)
            for d, k in enumerate(ks):
                mode = mode * np.sin((k + 1) * np.pi * coords[d] / grid.extents[d])
            values += rng.normal() / (1 + sum(ks)) * mode
        values /= max(np.max(np.abs(values)), 1e-300)
    else:
        raise ConfigError(f'unknown random initial kind {kind!r} (expected smooth or cellwise)')
    return ScalarField(grid, offset + amplitude * values, 0.0)


def manufactured_source(exact, law):
    """f = p*_t - div(K(|grad p*|) grad p*) = p*_t - [K lap p* + K'(xi)/xi grad p*^T H grad p*]."""

    def source(*coords, t):
        grad = exact.gradient(*coords, t=t)
        hess = exact.hessian_entries(*coords, t=t)
        xi = np.sqrt(sum(g ** 2 for g in grad))
        K = eval_K(law, xi)
        Kp = eval_K_prime(law, xi)
        laplacian = sum(hess[i][i] for i in range(exact.dim))
        quad = sum(grad[i] * hess[i][j] * grad[j] for i in range(exact.dim) for j in range(exact.dim))
        with np.errstate(divide='ignore', invalid='ignore'):
            nonlinear = np.where(xi > 0, Kp / np.where(xi > 0, xi, 1.0) * quad, 0.0)
        return exact.time_derivative(*coords, t=t) - (K * laplacian + nonlinear)

    return lambda *coords: source(*coords[:-1], t=coords[-1])


@dataclass(frozen=True)
class ConvergenceReport:
    spatial: tuple
    spatial_orders: tuple
    temporal: tuple
    temporal_orders: tuple

    def rows(self):
        """(kind, resolution, dt, error, order) rows for printing."""
        out = []
        for i, (cells, dt, err) in enumerate(self.spatial):
            out.append(('space', cells, dt, err, self.spatial_orders[i - 1] if i else None))
        for i, (cells, dt, err) in enumerate(self.temporal):
            out.append(('time', cells, dt, err, self.temporal_orders[i - 1] if i else None))
        return out


def _orders(errors, sizes):
    orders = []
    for (e1, s1), (e2, s2) in zip(zip(errors, sizes), zip(errors[1:], sizes[1:])):
        if e1 > 0 and e2 > 0:
            orders.append(math.log(e1 / e2) / math.log(s1 / s2))
        else:
            orders.append(math.nan)
    return tuple(orders)


def _mms_final(config, law, exact, grid):
    p0 = ScalarField(grid, exact.on_cells(grid, 0.0), 0.0)
    record = run_ibvp(config, law, p0, exact)
    # the final state is the last stored snapshot
    return record.snapshots[-1].values, record.final_time


def _mms_error(config, law, exact, grid):
    final, t = _mms_final(config, law, exact, grid)
    return float(np.max(np.abs(final - exact.on_cells(grid, t))))


def run_manufactured(exact, law, cells=(64, 128), dt_factor=1.0, t_end=0.1, temporal_cells=128,
                     temporal_dts=(1e-3, 5e-4), temporal_t_end=0.5, extents=None, config=None):
    """Max-norm errors at t_end and observed orders.

    Spatial study: dt = dt_factor h^2 on each grid, errors against the exact solution p*.
    Temporal study: one fixed grid, errors against a reference on that same grid, the Richardson
    extrapolation 2 u(dt/4) - u(dt/2) from the smallest dt, so the spatial error cancels.
    """
    base = config or SolverConfig()
    dim = exact.dim
    extents = tuple(extents or (1.0,) * dim)
    source = manufactured_source(exact, law)

    spatial = []
    for c in cells:
        grid = Grid((c,) * dim, extents)
        dt = dt_factor * min(grid.spacing) ** 2
        run_config = replace(base, dt=dt, t_end=t_end, source=source, snapshots=1, full_equation=False)
        spatial.append((c, dt, _mms_error(run_config, law, exact, grid)))
        logger.info('MMS space: %d cells, dt=%.3g, error %.3e', c, dt, spatial[-1][2])

    grid = Grid((temporal_cells,) * dim, extents)
    time_base = replace(base, t_end=temporal_t_end, source=source, snapshots=1, full_equation=False)
    finest = min(temporal_dts)
    half, _ = _mms_final(replace(time_base, dt=finest / 2), law, exact, grid)
    quarter, _ = _mms_final(replace(time_base, dt=finest / 4), law, exact, grid)
    reference = 2 * quarter - half
    temporal = []
    for dt in temporal_dts:
        final, _ = _mms_final(replace(time_base, dt=dt), law, exact, grid)
        temporal.append((temporal_cells, dt, float(np.max(np.abs(final - reference)))))
        logger.info('MMS time: dt=%.3g, error %.3e', dt, temporal[-1][2])

    return ConvergenceReport(
        tuple(spatial),
        _orders([e for _, _, e in spatial], [max(extents) / c for c, _, _ in spatial]),
        tuple(temporal),
        _orders([e for _, _, e in temporal], [dt for _, dt, _ in temporal]),
    )
