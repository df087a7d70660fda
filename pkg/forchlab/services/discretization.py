"""Uniform cell-centred grids on [0, L_1] x ... , discrete fields, boundary extension
data Psi and the face operators (gradient, nonlinear Darcy flux, divergence).

Dirichlet data enter through ghost values obtained by linear extrapolation through
the boundary value, so a boundary face sees (u - psi)/(h/2).
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from ..errors import ConfigError, DomainError
from .constitutive import eval_K
from .expressions import compile_expression, is_time_independent, parse_expression, variables

logger = logging.getLogger(__name__)

XI_CLAMP = 1e12


@dataclass(frozen=True)
class Grid:
    shape: tuple
    extents: tuple

    def __post_init__(self):
        shape = tuple(int(c) for c in self.shape)
        extents = tuple(float(e) for e in self.extents)
        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'extents', extents)
        if len(shape) not in (1, 2):
            raise DomainError(f'grids are 1D or 2D, got dimension {len(shape)}')
        if len(extents) != len(shape):
            raise DomainError('one extent per axis is required')
        if any(c < 4 for c in shape):
            raise DomainError(f'at least 4 cells per axis, got {shape}')
        if any(not (e > 0 and np.isfinite(e)) for e in extents):
            raise DomainError(f'extents must be positive, got {extents}')

    @property
    def n(self):
        return len(self.shape)

    @property
    def spacing(self):
        return tuple(e / c for e, c in zip(self.extents, self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def measure(self):
        return float(np.prod(self.extents))

    @property
    def size(self):
        return int(np.prod(self.shape))

    def axis_centers(self, axis):
        h = self.spacing[axis]
        return (np.arange(self.shape[axis]) + 0.5) * h

    def cell_centers(self):
        return np.meshgrid(*(self.axis_centers(d) for d in range(self.n)), indexing='ij')

    def face_shape(self, axis):
        shape = list(self.shape)
        shape[axis] += 1
        return tuple(shape)

    def boundary_face_centers(self, axis, side):
        """Coordinates of the faces on the low (side=0) or high (side=1) wall of `axis`."""
        wall = 0.0 if side == 0 else self.extents[axis]
        if self.n == 1:
            return (np.array(wall),)
        other = 1 - axis
        along = self.axis_centers(other)
        coords = [None, None]
        coords[axis] = np.full_like(along, wall)
        coords[other] = along
        return tuple(coords)

    def refine(self, factor=2):
        return Grid(tuple(c * factor for c in self.shape), self.extents)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape) if values.size == self.grid.size else values
        if values.shape != self.grid.shape:
            raise DomainError(f'field of shape {values.shape} on grid {self.grid.shape}')
        if not np.all(np.isfinite(values)):
            raise DomainError(f'non-finite field values at t={self.time}')
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'time', float(self.time))

    def with_values(self, values, time=None):
        return ScalarField(self.grid, values, self.time if time is None else time)


@dataclass(frozen=True, eq=False)
class FaceField:
    """components[d] lives on the faces normal to axis d (shape grid.face_shape(d))."""

    grid: Grid
    components: tuple
    time: float = 0.0


@dataclass(frozen=True, eq=False)
class FaceGradient:
    grid: Grid
    normal: tuple
    tangential: tuple
    time: float = 0.0

    def magnitude(self, axis):
        return np.hypot(self.normal[axis], self.tangential[axis])

    def as_face_field(self):
        return FaceField(self.grid, self.normal, self.time)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Extension Psi(x, t) of the Dirichlet data with its derivatives.

    Derivatives not supplied are derived symbolically from Psi.
    """

    dim: int
    psi: sp.Expr
    psi_t: sp.Expr
    grad: tuple
    hessian: tuple
    grad_t: tuple
    supplied: tuple = ()
    _compiled: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_expressions(cls, psi, dim, psi_t=None, grad=None, hessian=None, grad_t=None):
        coords = variables(dim)[:-1]
        t_sym = variables(dim)[-1]
        psi_expr = parse_expression(psi, dim)
        supplied = []

        def parsed(texts, expected, name):
            if texts is None:
                return None
            if len(texts) != expected:
                raise ConfigError(f'boundary {name} needs {expected} entries, got {len(texts)}')
            supplied.append(name)
            return tuple(parse_expression(text, dim) for text in texts)

        psi_t_expr = parse_expression(psi_t, dim) if psi_t is not None else sp.diff(psi_expr, t_sym)
        if psi_t is not None:
            supplied.append('psi_t')
        grad_expr = parsed(grad, dim, 'grad') or tuple(sp.diff(psi_expr, c) for c in coords)
        flat_hessian = None if hessian is None else [h for row in hessian for h in row]
        hess_expr = parsed(flat_hessian, dim * dim, 'hessian')
        if hess_expr is None:
            hess_expr = tuple(sp.diff(psi_expr, ci, cj) for ci in coords for cj in coords)
        grad_t_expr = parsed(grad_t, dim, 'grad_t') or tuple(sp.diff(g, t_sym) for g in grad_expr)
        hess_rows = tuple(tuple(hess_expr[i * dim:(i + 1) * dim]) for i in range(dim))
        return cls(dim, psi_expr, psi_t_expr, grad_expr, hess_rows, grad_t_expr, tuple(supplied))

    def _fn(self, key, expr):
        if key not in self._compiled:
            self._compiled[key] = compile_expression(expr, self.dim)
        return self._compiled[key]

    @property
    def is_static(self):
        return is_time_independent(self.psi)

    def value(self, *coords, t):
        return self._fn('psi', self.psi)(*coords, t)

    def time_derivative(self, *coords, t):
        return self._fn('psi_t', self.psi_t)(*coords, t)

    def gradient(self, *coords, t):
        return [self._fn(f'grad{d}', g)(*coords, t) for d, g in enumerate(self.grad)]

    def hessian_entries(self, *coords, t):
        return [[self._fn(f'hess{i}{j}', h)(*coords, t) for j, h in enumerate(row)]
                for i, row in enumerate(self.hessian)]

    def gradient_t(self, *coords, t):
        return [self._fn(f'gradt{d}', g)(*coords, t) for d, g in enumerate(self.grad_t)]

    def on_cells(self, grid, t):
        return self.value(*grid.cell_centers(), t=t)

    def face_values(self, grid, t):
        """psi at boundary face centres: [(low, high) per axis]."""
        return [tuple(self.value(*grid.boundary_face_centers(d, side), t=t) for side in (0, 1))
                for d in range(grid.n)]

    def validate(self, grid, probes=100, seed=0, step=1e-5, rtol=1e-4, t_max=1.0):
        """Check every derivative callback against central differences at random probes."""
        rng = np.random.default_rng(seed)
        coords = [rng.uniform(0.0, e, probes) for e in grid.extents]
        times = rng.uniform(step, t_max, probes)
        failures = []

        def check(name, callback, reference):
            err = np.abs(callback - reference)
            if np.any(err > rtol * np.maximum(1.0, np.abs(callback))):
                failures.append(f'{name} (max deviation {err.max():.3g})')

        def shifted(axis, delta):
            moved = list(coords)
            moved[axis] = coords[axis] + delta
            return moved

        psi_fd_t = (self.value(*coords, t=times + step) - self.value(*coords, t=times - step)) / (2 * step)
        check('psi_t', self.time_derivative(*coords, t=times), psi_fd_t)
        grad = self.gradient(*coords, t=times)
        for d in range(self.dim):
            fd = (self.value(*shifted(d, step), t=times) - self.value(*shifted(d, -step), t=times)) / (2 * step)
            check(f'grad[{d}]', grad[d], fd)
            fd_t = (self.gradient(*coords, t=times + step)[d] - self.gradient(*coords, t=times - step)[d]) / (2 * step)
            check(f'grad_t[{d}]', self.gradient_t(*coords, t=times)[d], fd_t)
        hess = self.hessian_entries(*coords, t=times)
        for i in range(self.dim):
            for j in range(self.dim):
                fd = (self.gradient(*shifted(j, step), t=times)[i]
                      - self.gradient(*shifted(j, -step), t=times)[i]) / (2 * step)
                check(f'hessian[{i}][{j}]', hess[i][j], fd)
        if failures:
            raise ConfigError('boundary derivatives disagree with finite differences of Psi: '
                              + ', '.join(failures))
        return True


def _dirichlet_values(boundary, grid, t):
    if boundary is None:
        return [(np.zeros(()) if grid.n == 1 else np.zeros(grid.shape[1 - d]),) * 2 for d in range(grid.n)]
    if isinstance(boundary, BoundaryData):
        return boundary.face_values(grid, t)
    return boundary


def padded(values, face_values):
    """Cell values surrounded by one layer of Dirichlet ghosts (2 psi - u)."""
    if values.ndim == 1:
        low, high = face_values[0]
        return np.concatenate(([2 * low - values[0]], values, [2 * high - values[-1]]))
    nx, ny = values.shape
    P = np.empty((nx + 2, ny + 2))
    P[1:-1, 1:-1] = values
    P[0, 1:-1] = 2 * face_values[0][0] - values[0]
    P[-1, 1:-1] = 2 * face_values[0][1] - values[-1]
    P[1:-1, 0] = 2 * face_values[1][0] - values[:, 0]
    P[1:-1, -1] = 2 * face_values[1][1] - values[:, -1]
    # corners by bilinear extrapolation
    P[0, 0] = P[0, 1] + P[1, 0] - P[1, 1]
    P[0, -1] = P[0, -2] + P[1, -1] - P[1, -2]
    P[-1, 0] = P[-1, 1] + P[-2, 0] - P[-2, 1]
    P[-1, -1] = P[-1, -2] + P[-2, -1] - P[-2, -2]
    return P


def gradient(field, boundary=None, t=None):
    """Face gradients. Normal parts are neighbour differences; in 2D the tangential part on a
    face averages the four adjacent cell-centred differences.

    `boundary` is BoundaryData, precomputed face values, or None for homogeneous data.
    """
    grid = field.grid
    t = field.time if t is None else t
    P = padded(field.values, _dirichlet_values(boundary, grid, t))
    h = grid.spacing
    if grid.n == 1:
        normal = np.diff(P) / h[0]
        return FaceGradient(grid, (normal,), (np.zeros_like(normal),), t)

    nx = np.diff(P[:, 1:-1], axis=0) / h[0]
    ny = np.diff(P[1:-1, :], axis=1) / h[1]
    cy = (P[:, 2:] - P[:, :-2]) / (2 * h[1])
    cx = (P[2:, :] - P[:-2, :]) / (2 * h[0])
    tx = 0.5 * (cy[:-1] + cy[1:])
    ty = 0.5 * (cx[:, :-1] + cx[:, 1:])
    return FaceGradient(grid, (nx, ny), (tx, ty), t)


def cell_gradient(field, boundary=None, t=None):
    """Cell-centred gradient components from averaging the two faces of each cell."""
    grad = gradient(field, boundary, t)
    comps = []
    for d, normal in enumerate(grad.normal):
        lo = [slice(None)] * field.grid.n
        hi = [slice(None)] * field.grid.n
        lo[d] = slice(None, -1)
        hi[d] = slice(1, None)
        comps.append(0.5 * (normal[tuple(lo)] + normal[tuple(hi)]))
    return comps


def clamp_xi(xi):
    if np.any(xi > XI_CLAMP):
        logger.warning('clamping %d gradient magnitudes above %.0e', int(np.sum(xi > XI_CLAMP)), XI_CLAMP)
        return np.minimum(xi, XI_CLAMP)
    return xi


def face_coefficients(field, law, boundary=None, t=None, grad=None):
    """K(|grad p|) on every face, with the full (normal + tangential) magnitude."""
    grad = gradient(field, boundary, t) if grad is None else grad
    return tuple(eval_K(law, clamp_xi(grad.magnitude(d))) for d in range(field.grid.n))


def nonlinear_flux(field, law, boundary=None, t=None):
    """v = -K(|grad p|) dp/dn on every face."""
    grad = gradient(field, boundary, t)
    coeffs = face_coefficients(field, law, grad=grad)
    return FaceField(field.grid, tuple(-k * n for k, n in zip(coeffs, grad.normal)), grad.time)


def divergence(flux):
    grid = flux.grid
    total = np.zeros(grid.shape)
    for d, comp in enumerate(flux.components):
        total += np.diff(comp, axis=d) / grid.spacing[d]
    return ScalarField(grid, total, flux.time)


def cell_inner(u, v, grid):
    return float(np.sum(np.asarray(u) * np.asarray(v)) * grid.cell_volume)


def face_inner(F, G, grid):
    """Face inner product with half dual volume on boundary faces."""
    total = 0.0
    for d, (f, g) in enumerate(zip(F.components, G.components)):
        weights = np.ones(grid.face_shape(d))
        edge = [slice(None)] * grid.n
        for index in (0, -1):
            edge[d] = index
            weights[tuple(edge)] = 0.5
        total += float(np.sum(weights * f * g))
    return total * grid.cell_volume


def boundary_gradient_magnitudes(field, boundary, t=None):
    """|grad p| on boundary faces: normal part by second-order one-sided differences through
    psi, tangential part from the analytic tangential derivative of Psi."""
    grid = field.grid
    t = field.time if t is None else t
    u = field.values
    mags = []
    for d in range(grid.n):
        h = grid.spacing[d]
        first = np.take(u, 0, axis=d), np.take(u, 1, axis=d)
        last = np.take(u, -1, axis=d), np.take(u, -2, axis=d)
        for side, (u0, u1) in ((0, first), (1, last)):
            coords = grid.boundary_face_centers(d, side)
            psi = boundary.value(*coords, t=t)
            normal = (9 * u0 - u1 - 8 * psi) / (3 * h)
            if grid.n == 1:
                mags.append(np.abs(np.atleast_1d(normal)))
                continue
            tangential = boundary.gradient(*coords, t=t)[1 - d]
            mags.append(np.hypot(normal, tangential))
    return mags
