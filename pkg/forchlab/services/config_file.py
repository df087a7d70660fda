"""Run configuration files (YAML, one mapping per section).

    polynomial:   law or exponents/coefficients, tolerances, lookup table
    grid:         cells, extents
    boundary:     psi and optional derivative expressions
    initial:      expression, or a seeded random kind
    solver:       scheme, dt, t_end, tolerances, source, full equation, snapshots
    functionals:  tracked ids, alpha, p1, s0, s
    verify:       theorem ids, train/holdout split, windows, lemma corpora
    mms:          exact solution and refinement levels
    sweep:        section.key: [values, ...]

Unknown sections and keys are rejected by name; error messages write a section as [name].
"""
import copy
import itertools
import logging
import os
import re
from dataclasses import dataclass, field, fields

import yaml

from ..errors import ConfigError, ForchlabError
from . import constitutive
from .constitutive import ConstitutiveLaw, ForchheimerPolynomial
from .discretization import BoundaryData, Grid, ScalarField
from .expressions import compile_expression, parse_expression
from .functionals import FunctionalSettings
from .solver import SolverConfig, random_initial
from .theorems import THEOREMS, VerifySettings

logger = logging.getLogger(__name__)

NAMED_LAWS = {
    'darcy_like': constitutive.darcy_like,
    'two_term': constitutive.two_term,
    'three_term': constitutive.three_term,
    'power_law': constitutive.power_law,
}


@dataclass(frozen=True)
class PolynomialSection:
    law: str | None = None
    exponents: list | None = None
    coefficients: list | None = None
    parameters: dict = field(default_factory=dict)
    root_tolerance: float = 1e-12
    quadrature_tolerance: float = 1e-10
    table: bool = False
    table_xi_max: float = 1e6
    table_seed: int = 0


@dataclass(frozen=True)
class GridSection:
    cells: list = field(default_factory=lambda: [64])
    extents: list | None = None


@dataclass(frozen=True)
class BoundarySection:
    psi: str = '0'
    psi_t: str | None = None
    grad: list | None = None
    hessian: list | None = None
    grad_t: list | None = None
    validate: bool = True
    validate_seed: int = 0


@dataclass(frozen=True)
class InitialSection:
    expression: str | None = None
    kind: str | None = None
    seed: int | None = None
    amplitude: float = 1.0
    modes: int = 4
    offset: float = 0.0


@dataclass(frozen=True)
class SolverSection:
    scheme: str = 'implicit-picard'
    dt: float = 1e-3
    t_end: float = 1.0
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    linear_tol: float = 1e-12
    source: str | None = None
    full_equation: bool = False
    kappa: float | None = None
    phi: float | None = None
    snapshots: int | None = 32
    every_step: bool = False


@dataclass(frozen=True)
class FunctionalsSection:
    tracked: list | None = None
    alpha: float = 4.0
    p1: float = 1.0
    s0: float | None = None
    s: list = field(default_factory=lambda: [3.0])
    tail_fraction: float = 0.25


@dataclass(frozen=True)
class VerifySection:
    theorems: list = field(default_factory=lambda: ['grad_linf_window', 'h_integral', 'h_energy'])
    train: int = 10
    holdout: int = 5
    seed: int | None = None
    T0: float = 0.0
    T: float | None = None
    theta: float = 0.5
    small_time: float | None = None
    s: float = 3.0
    holdout_slack: float = 1.0
    c_prime_grid: list = field(default_factory=lambda: [0.0, 1e-3, 1e-2, 1e-1, 1.0])
    per_term: bool = False
    lemmas: list = field(default_factory=list)
    corpus_size: int = 50
    corpus_seed: int | None = None
    corpus_steps: int = 11
    recurrence_count: int = 1000
    recurrence_seed: int | None = None
    luk_M_fraction: float = 0.5
    luk_s: float = 1.0


@dataclass(frozen=True)
class MMSSection:
    exact: str = 'exp(-t)*sin(pi*x)'
    cells: list = field(default_factory=lambda: [64, 128])
    dt_factor: float = 1.0
    t_end: float = 0.1
    temporal_cells: int = 128
    temporal_dts: list = field(default_factory=lambda: [1e-3, 5e-4])
    temporal_t_end: float = 0.5


class ConfigLoader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (1e-3)."""


ConfigLoader.add_implicit_resolver(
    'tag:yaml.org,2002:float',
    re.compile(r'''^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                    |[-+]?\.(?:inf|Inf|INF)
                    |\.(?:nan|NaN|NAN))$''', re.X),
    list('-+0123456789.'),
)


def load_yaml(text_or_stream):
    return yaml.load(text_or_stream, Loader=ConfigLoader)


SECTIONS = {
    'polynomial': PolynomialSection,
    'grid': GridSection,
    'boundary': BoundarySection,
    'initial': InitialSection,
    'solver': SolverSection,
    'functionals': FunctionalsSection,
    'verify': VerifySection,
    'mms': MMSSection,
}
LEMMAS = ('degiorgi', 'sob4', 'weighted', 'luk')


def _section(name, data):
    cls = SECTIONS[name]
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError(f'[{name}] must be a mapping')
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f'unknown key {key!r} in [{name}] (known: {", ".join(sorted(known))})')
    return cls(**data)


@dataclass(frozen=True)
class RunConfig:
    name: str
    raw: dict
    polynomial: PolynomialSection
    grid: GridSection
    boundary: BoundarySection
    initial: InitialSection
    solver: SolverSection
    functionals: FunctionalsSection
    verify: VerifySection
    mms: MMSSection
    sweep: dict

    @classmethod
    def from_dict(cls, raw, name='run'):
        raw = {key: {} if value is None else value for key, value in raw.items()}
        unknown = [k for k in raw if k not in SECTIONS and k != 'sweep']
        if unknown:
            raise ConfigError(f'unknown section [{unknown[0]}] (known: {", ".join(list(SECTIONS) + ["sweep"])})')
        sections = {key: _section(key, raw.get(key, {})) for key in SECTIONS}
        sweep = raw.get('sweep', {})
        if not isinstance(sweep, dict):
            raise ConfigError('[sweep] must map section.key to a list of values')
        for key, values in sweep.items():
            section, _, option = key.partition('.')
            if section not in SECTIONS or option not in {f.name for f in fields(SECTIONS[section])}:
                raise ConfigError(f'unknown sweep key {key!r} (expected "<section>.<key>")')
            if not isinstance(values, list) or not values:
                raise ConfigError(f'sweep key {key!r} needs a non-empty list of values')
        config = cls(name=name, raw=copy.deepcopy(raw), sweep=dict(sweep), **sections)
        config.check()
        return config

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                raw = load_yaml(f)
        except FileNotFoundError as e:
            raise ConfigError(f'config file {path} not found') from e
        except yaml.YAMLError as e:
            raise ConfigError(f'{path}: {e}') from e
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f'{path}: a config file is a mapping of sections, got {type(raw).__name__}')
        name = os.path.splitext(os.path.basename(path))[0]
        logger.debug('loaded config %s from %s', name, path)
        return cls.from_dict(raw, name)

    def check(self):
        """Cross-section checks that do not need any numerics."""
        if self.dim not in (1, 2):
            raise ConfigError(f'[grid] cells must list 1 or 2 counts, got {self.grid.cells}')
        if self.initial.expression is None and self.initial.kind is None:
            raise ConfigError('[initial] needs an expression or a random kind')
        if self.initial.kind is not None and self.initial.seed is None:
            raise ConfigError('[initial] random initial data needs a seed')
        lemmas = [m for m in self.verify.lemmas if m not in LEMMAS]
        if lemmas:
            raise ConfigError(f'unknown lemma check {lemmas[0]!r} (known: {", ".join(LEMMAS)})')
        if self.verify.lemmas and self.verify.corpus_seed is None and set(self.verify.lemmas) - {'degiorgi'}:
            raise ConfigError('[verify] corpus checks need corpus_seed')
        if 'degiorgi' in self.verify.lemmas and self.verify.recurrence_seed is None:
            raise ConfigError('[verify] the recurrence check needs recurrence_seed')
        unknown = [t for t in self.verify.theorems if t not in THEOREMS]
        if unknown:
            raise ConfigError(f'unknown theorem id {unknown[0]!r} (known: {", ".join(THEOREMS)})')
        try:
            self.functional_settings().step_ids()
        except ForchlabError as e:
            raise ConfigError(f'[functionals] {e}') from e

    @property
    def dim(self):
        return len(self.grid.cells)

    def build_law(self):
        p = self.polynomial
        if p.law is not None:
            if p.law not in NAMED_LAWS:
                raise ConfigError(f'unknown law {p.law!r} (known: {", ".join(NAMED_LAWS)})')
            try:
                poly = NAMED_LAWS[p.law](**p.parameters)
            except TypeError as e:
                raise ConfigError(f'[polynomial] parameters for {p.law}: {e}') from e
        elif p.exponents is not None and p.coefficients is not None:
            poly = ForchheimerPolynomial(tuple(p.exponents), tuple(p.coefficients))
        else:
            raise ConfigError('[polynomial] needs a law name or exponents and coefficients')
        law = ConstitutiveLaw(poly, p.root_tolerance, p.quadrature_tolerance)
        return law.with_table(xi_max=p.table_xi_max, seed=p.table_seed) if p.table else law

    def build_grid(self):
        extents = self.grid.extents or [1.0] * self.dim
        return Grid(tuple(int(c) for c in self.grid.cells), tuple(float(e) for e in extents))

    def build_boundary(self, grid=None):
        b = self.boundary
        boundary = BoundaryData.from_expressions(b.psi, self.dim, b.psi_t, b.grad, b.hessian, b.grad_t)
        if b.validate and boundary.supplied:
            boundary.validate(grid or self.build_grid(), seed=b.validate_seed, t_max=max(self.solver.t_end, 1e-3))
        return boundary

    def build_initial(self, grid):
        i = self.initial
        if i.expression is not None:
            values = compile_expression(parse_expression(i.expression, self.dim), self.dim)(*grid.cell_centers(), 0.0)
            return ScalarField(grid, values, 0.0)
        return random_initial(grid, i.seed, i.kind, i.amplitude, i.modes, i.offset)

    def solver_config(self):
        s = self.solver
        source = None
        if s.source is not None:
            source = compile_expression(parse_expression(s.source, self.dim), self.dim)
        return SolverConfig(
            scheme=s.scheme, dt=s.dt, t_end=s.t_end, picard_tol=s.picard_tol,
            picard_max_iter=s.picard_max_iter, linear_tol=s.linear_tol, source=source,
            full_equation=s.full_equation, kappa=s.kappa, phi=s.phi,
            snapshots=None if s.every_step else s.snapshots,
        )

    def functional_settings(self):
        f = self.functionals
        # s0 must stay below n for s0* to exist
        s0 = f.s0 if f.s0 is not None else (0.8 if self.dim == 1 else 1.5)
        return FunctionalSettings(
            tracked=tuple(f.tracked) if f.tracked is not None else None,
            alpha=f.alpha, p1=f.p1, s0=s0, s_values=tuple(float(v) for v in f.s),
            tail_fraction=f.tail_fraction,
        )

    def verify_settings(self):
        v = self.verify
        return VerifySettings(T0=v.T0, T=v.T, theta=v.theta, small_time=v.small_time, s=v.s,
                              holdout_slack=v.holdout_slack, c_prime_grid=tuple(v.c_prime_grid),
                              per_term=v.per_term)

    def with_override(self, key, value):
        section, _, option = key.partition('.')
        raw = copy.deepcopy(self.raw)
        raw.setdefault(section, {})[option] = value
        return RunConfig.from_dict(raw, self.name)


def _label(value):
    text = format(value, 'g') if isinstance(value, float) else str(value)
    return ''.join(c if c.isalnum() or c in '.-' else '_' for c in text)


@dataclass(frozen=True)
class SweepPoint:
    index: int
    name: str
    overrides: tuple
    config: RunConfig


def sweep_points(config, params=None):
    """Grid points in lexicographic order of the sorted keys; params overrides [sweep]."""
    grid = dict(config.sweep)
    grid.update(params or {})
    if not grid:
        raise ConfigError('nothing to sweep: no [sweep] section and no --param')
    keys = sorted(grid)
    base = RunConfig.from_dict({k: v for k, v in config.raw.items() if k != 'sweep'}, config.name)
    points = []
    for index, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        point = base
        for key, value in zip(keys, combo):
            point = point.with_override(key, value)
        label = '_'.join(f'{k.partition(".")[2]}-{_label(v)}' for k, v in zip(keys, combo))
        points.append(SweepPoint(index, f'point_{index}_{label}', tuple(zip(keys, combo)), point))
    return points


def parse_param(text):
    """'section.key=v1,v2' -> (key, [values]) with YAML scalar parsing of each value."""
    key, sep, values = text.partition('=')
    if not sep or not values:
        raise ConfigError(f'--param expects section.key=v1,v2,..., got {text!r}')
    parsed = []
    for item in values.split(','):
        try:
            parsed.append(load_yaml(item.strip()))
        except yaml.YAMLError:
            parsed.append(item.strip())
    return key.strip(), parsed
