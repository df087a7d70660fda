"""Verification of a run family against the configured inequalities and lemma checks."""
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, PreconditionError, RegistryError
from .constitutive import ForchheimerPolynomial, degree_exponent
from .discretization import ScalarField
from .estimates import (
    ContractionResult, check_luk, check_sob4, check_weighted_embedding, comparable_meta, degiorgi_sequence,
    fit_theorem_constant, random_recurrence_specs, ratio_stability, smooth_corpus, split_family,
    verify_contraction, verify_run_properties,
)
from .functionals import derived_series, tail_constants, weight_from_gradient
from .records import RunRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LemmaSummary:
    name: str
    summary: str
    passed: bool


@dataclass
class VerificationOutcome:
    checks: list = field(default_factory=list)
    lemmas: list = field(default_factory=list)
    properties: list = field(default_factory=list)
    contraction: list = field(default_factory=list)
    split: dict | None = None
    tails: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)

    @property
    def passed(self):
        return (all(c.passed for c in self.checks) and all(l.passed for l in self.lemmas)
                and all(p.max_principle_ok is not False for p in self.properties)
                and all(result.contracting for _, result in self.contraction))

    def context(self):
        return {'checks': self.checks, 'lemmas': self.lemmas, 'properties': self.properties,
                'contraction': self.contraction, 'split': self.split, 'tails': self.tails,
                'passed': self.passed}


def load_family(run_dirs):
    records = {}
    for directory in run_dirs:
        record = RunRecord.load(directory)
        name = record.meta.get('name') or os.path.basename(os.path.normpath(directory))
        if not record.complete:
            raise PreconditionError(f'run {name} is incomplete ({record.error}); verify needs completed runs')
        records[name] = record
    return records


def family_degree(records):
    exponents = set()
    for name, record in records.items():
        poly = record.meta['polynomial']
        exponents.add(round(degree_exponent(ForchheimerPolynomial(tuple(poly['exponents']),
                                                                  tuple(poly['coefficients']))), 12))
    if len(exponents) != 1:
        raise PreconditionError(f'runs in one family must share the degree exponent a, got {sorted(exponents)}')
    return exponents.pop()


def contraction_pairs(records):
    """Pairs (first, other) among runs whose settings differ only in the initial data."""
    groups = {}
    for name in sorted(records):
        key = json.dumps(comparable_meta(records[name].meta), sort_keys=True, default=str)
        groups.setdefault(key, []).append(name)
    pairs = []
    for names in groups.values():
        pairs.extend((names[0], other) for other in names[1:])
    return pairs


def check_contraction(records):
    """Contraction result for every pair; a pair that cannot be compared is a failed result."""
    results = {}
    for a, b in contraction_pairs(records):
        try:
            results[(a, b)] = verify_contraction(records[a], records[b])
        except PreconditionError as e:
            logger.warning('contraction pair %s/%s not comparable: %s', a, b, e)
            results[(a, b)] = ContractionResult.failed(str(e))
    return results


def family_derived(records, bundle, tail_fraction=0.25):
    """Derived series and tail-window constants of every run that tracks the columns they need."""
    derived, tails = {}, {}
    for name in sorted(records):
        series = records[name].series
        try:
            derived[name] = (series.times, derived_series(series, bundle))
            tails[name] = tail_constants(series, bundle, tail_fraction)
        except RegistryError as e:
            logger.info('no derived series for %s: %s', name, e)
            derived.pop(name, None)
    return derived, tails


def _stability_summary(name, measure, grid, limit=0.2):
    stability = ratio_stability(measure, grid)
    return LemmaSummary(name, f'max ratio {stability.coarse:.4g} (refined {stability.fine:.4g}, '
                              f'drift {stability.drift:.2%})', stability.drift < limit)


def _bump(grid):
    centers = grid.cell_centers()
    values = np.ones(grid.shape)
    for d in range(grid.n):
        values = values * np.sin(np.pi * centers[d] / grid.extents[d]) ** 2
    return ScalarField(grid, values, 0.0)


def lemma_checks(config, law):
    v = config.verify
    grid = config.build_grid()
    times = np.linspace(0.0, config.solver.t_end, v.corpus_steps)
    s0 = config.functional_settings().s0
    alpha = config.functional_settings().alpha
    summaries = []
    for lemma in v.lemmas:
        if lemma == 'degiorgi':
            specs = random_recurrence_specs(v.recurrence_count, v.recurrence_seed)
            converged = sum(degiorgi_sequence(spec).converged for spec in specs)
            summaries.append(LemmaSummary('degiorgi', f'{converged}/{len(specs)} sequences below 1e-12',
                                          converged == len(specs)))
        elif lemma == 'sob4':
            summaries.append(_stability_summary('sob4', lambda g: check_sob4(
                smooth_corpus(g, times, v.corpus_size, v.corpus_seed), alpha, law.a, g.n,
                min_size=v.corpus_size).max, grid))
        elif lemma == 'weighted':
            summaries.append(_stability_summary('weighted', lambda g: check_weighted_embedding(
                smooth_corpus(g, times, v.corpus_size, v.corpus_seed), s0, g.n,
                weight=lambda u: weight_from_gradient(law, u), min_size=v.corpus_size).max, grid))
        elif lemma == 'luk':
            def luk_ratio(g):
                w = _bump(g)
                gradient = np.gradient(w.values, *g.spacing, edge_order=2)
                gradient = [gradient] if g.n == 1 else gradient
                M = v.luk_M_fraction * float(np.max(np.sqrt(sum(c ** 2 for c in gradient))))
                return check_luk(w, law, M, v.luk_s).ratio
            summaries.append(_stability_summary('luk', luk_ratio, grid))
    return summaries


def verify_family(config, records):
    if config.verify.theorems and config.verify.seed is None:
        raise ConfigError('[verify] seed is required for the train/holdout split')
    law = config.build_law()
    outcome = VerificationOutcome()
    degree = family_degree(records)
    n = len(next(iter(records.values())).meta['grid']['cells'])
    bundle = config.functional_settings().bundle(degree, n)
    if config.verify.theorems:
        train, holdout = split_family(list(records), config.verify.train, config.verify.holdout,
                                      config.verify.seed)
        outcome.split = {'train': train, 'holdout': holdout}
        settings = config.verify_settings()
        for theorem_id in config.verify.theorems:
            outcome.checks.append(fit_theorem_constant(
                theorem_id,
                {name: records[name].series for name in train},
                {name: records[name].series for name in holdout},
                bundle, settings,
            ))
    outcome.properties = [verify_run_properties(records[name], name) for name in sorted(records)]
    outcome.contraction = [(f'{a}|{b}', r) for (a, b), r in check_contraction(records).items()]
    outcome.derived, outcome.tails = family_derived(records, bundle, config.functionals.tail_fraction)
    outcome.lemmas = lemma_checks(config, law)
    return outcome
