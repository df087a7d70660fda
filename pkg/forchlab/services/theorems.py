"""Registry of inequality shapes LHS <= C * base * exp(C' * E) + extra.

Each evaluator reads one run's FunctionalSeries and returns the pieces of its inequality
at the configured window (T0, T, theta) or evaluation time. Bases are kept as logarithms
since several of them carry large powers.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import PreconditionError, RegistryError
from .functionals import (
    K1_cal, K2_cal, env, grad_ls_id, lambda_quantity, psi_norm_sum, s_tilde,
)


@dataclass(frozen=True)
class VerifySettings:
    T0: float = 0.0
    T: float | None = None
    theta: float = 0.5
    small_time: float | None = None
    s: float = 3.0
    holdout_slack: float = 1.0
    c_prime_grid: tuple = (0.0, 1e-3, 1e-2, 1e-1, 1.0)
    per_term: bool = False


@dataclass(frozen=True)
class Evaluation:
    lhs: float
    log_base: float
    extra: float = 0.0
    exp_arg: float = 0.0
    time: float | None = None
    window: tuple | None = None
    terms: dict = field(default_factory=dict)

    @property
    def base(self):
        return math.exp(self.log_base) if self.log_base < 700 else math.inf

    def log_required(self, c_prime):
        """log of the smallest C with lhs <= C base e^{C' E} + extra (-inf when none is needed)."""
        gap = self.lhs - self.extra
        if gap <= 0:
            return -math.inf
        if self.log_base == -math.inf:
            return math.inf
        return math.log(gap) - self.log_base - c_prime * self.exp_arg

    def ratio(self, c, c_prime):
        """lhs / rhs for the given constants."""
        if self.lhs <= 0:
            return 0.0
        if c <= 0:
            log_main = -math.inf
        else:
            log_main = math.log(c) + self.log_base + c_prime * self.exp_arg
        log_extra = math.log(self.extra) if self.extra > 0 else -math.inf
        log_rhs = np.logaddexp(log_main, log_extra)
        if log_rhs == -math.inf:
            return math.inf
        return float(math.exp(min(math.log(self.lhs) - log_rhs, 700.0)))


def _log(value):
    return math.log(value) if value > 0 else -math.inf


def _logprod(*pairs):
    """sum of e * log(v) over (v, e) pairs."""
    total = 0.0
    for value, exponent in pairs:
        if exponent == 0:
            continue
        total += exponent * _log(value)
    return total


# derived ids and the per-step columns they are computed from
DERIVED_SOURCES = {
    'lambda': ('lambda_density',),
    'EnvA': ('A_alpha',),
    'K1_cal': ('A_alpha',),
    'K2_cal': ('psi_sup', 'psi_t_sup', 'grad_psi_sup', 'hess_psi_sup', 'grad_psi_Laq', 'psi_t_Laq'),
    'int_G1': ('G1',),
    'int_G3': ('G3',),
    'int_H': ('H_int',),
    'int_pbar_t_sq': ('pbar_t_L2',),
    'psi_norms': ('grad_psi_Laq', 'psi_t_Laq'),
    'D_cal': ('sup_p', 'bdry_grad_sup'),
    'd0': ('sup_p', 'bdry_grad_sup'),
}


def require(series, ids):
    for key in ids:
        sources = DERIVED_SOURCES.get(key, (key,))
        missing = [s for s in sources if s not in series]
        if missing:
            detail = '' if sources == (key,) else f' (needs {", ".join(missing)})'
            raise RegistryError(f'missing functional column {key!r}{detail}', column=key)


def window_of(series, settings):
    t_end = float(series.times[-1])
    T0 = settings.T0
    T = t_end - T0 if settings.T is None else settings.T
    if not T > 0:
        raise PreconditionError(f'empty verification window: T0={T0}, T={T}')
    if T0 + T > t_end + 1e-9:
        raise PreconditionError(f'verification window ends at {T0 + T} after the run end {t_end}')
    if not 0 < settings.theta < 1:
        raise PreconditionError(f'theta must lie in (0, 1), got {settings.theta}')
    return T0, T, settings.theta


def small_time(series, settings):
    t = settings.small_time if settings.small_time is not None else min(float(series.times[-1]), 3.0)
    if not 0 < t <= 3:
        raise PreconditionError(f'small-time branch needs 0 < t <= 3, got {t}')
    if t > series.times[-1] + 1e-9:
        raise PreconditionError(f'small-time evaluation at {t} is beyond the run end {series.times[-1]}')
    return t


def large_time(series, minimum, strict=True):
    t = float(series.times[-1])
    if t < minimum or (strict and t == minimum):
        raise PreconditionError(f'large-time branch needs t {">" if strict else ">="} {minimum}, run ends at {t}')
    return t


def _pbar0(series):
    return float(series.column('pbar_Lalpha')[0])


def _env_term(series, bundle, t):
    env_at = float(env(series.column('A_alpha'))[series.mask(0.0, t)][-1])
    return env_at ** (1 / (bundle.alpha - bundle.a))


def _boundary_combo(series, t0, t1, mu0):
    combo = (series.column('psi_t_sup') ** mu0 + series.column('grad_psi_sup') ** 2
             + series.column('hess_psi_sup'))
    return float(np.max(combo[series.mask(max(t0, 0.0), t1)]))


def _psi_norms(series, bundle, t0, t1):
    return psi_norm_sum(series, bundle, max(t0, 0.0), t1)


def linf_window(series, bundle, settings):
    """sup |pbar| over [T0 + theta T, T0 + T] against the six-term bound."""
    T0, T, theta = window_of(series, settings)
    a, alpha = bundle.a, bundle.alpha
    d1, d2, d3, d4 = bundle.delta1, bundle.delta2, bundle.delta3, bundle.delta4
    X = series.spacetime_norm('pbar_Lalpha', T0, T0 + T, alpha)
    Y = (T ** ((alpha - 2) / (2 * alpha)) * series.spacetime_norm('grad_psi_Laq', T0, T0 + T, bundle.aq)
         + T ** ((alpha - 1) / alpha) * series.spacetime_norm('psi_t_Laq', T0, T0 + T, bundle.aq))
    terms = {
        'theta_term': (theta * T) ** (-1 / d1) * X,
        'T_term': T ** ((alpha - 2) / (2 * alpha * (1 + d1))) * X ** (d1 / (1 + d1)),
        'theta_term_2': (theta * T) ** (-1 / ((alpha - a) * d1)) * X ** (d3 / d1),
        'T_term_2': T ** ((alpha - 2) / (2 * (alpha - a) * (1 + d2))) * X ** (d3 / (1 + d2)),
        'psi_term': Y ** (1 / (1 + d3)) * X ** (d2 / (1 + d3)),
        'psi_term_2': Y ** (alpha / ((alpha - a) * (1 + d4))) * X ** (d4 / (1 + d4)),
    }
    lhs = series.window_sup('sup_pbar', T0 + theta * T, T0 + T)
    return Evaluation(lhs, _log(sum(terms.values())), window=(T0 + theta * T, T0 + T), terms=terms)


def linf_window_simple(series, bundle, settings):
    T0, T, theta = window_of(series, settings)
    X = series.spacetime_norm('pbar_Lalpha', T0, T0 + T, bundle.alpha)
    log_base = _logprod(
        (1 + (theta * T) ** (-1 / bundle.delta1) + T ** bundle.z1, 1),
        (1 + _psi_norms(series, bundle, T0, T0 + T), bundle.z2),
        (1 + X, bundle.z3),
    )
    lhs = series.window_sup('sup_pbar', T0 + theta * T, T0 + T)
    return Evaluation(lhs, log_base, window=(T0 + theta * T, T0 + T))


def linf_small(series, bundle, settings):
    t = small_time(series, settings)
    log_base = _logprod(
        (t, -1 / bundle.delta1),
        (1 + _pbar0(series) + _env_term(series, bundle, t), bundle.z3),
        (1 + _psi_norms(series, bundle, 0.0, t), bundle.z2),
    )
    return Evaluation(series.at('sup_pbar', t), log_base, time=t)


def linf_large(series, bundle, settings):
    t = large_time(series, 1.0, strict=False)
    log_base = _logprod(
        (1 + _pbar0(series) + _env_term(series, bundle, t), bundle.z3),
        (1 + _psi_norms(series, bundle, t - 1, t), bundle.z2),
    )
    return Evaluation(series.at('sup_pbar', t), log_base, time=t)


def _bdry_exp_arg(series, bundle, t, t0, scale):
    return scale * ((1 + _pbar0(series)) ** bundle.z3
                    * (1 + _env_term(series, bundle, t)) ** bundle.z3
                    * (1 + _psi_norms(series, bundle, t0, t)) ** bundle.z2)


def bdry_grad_small(series, bundle, settings):
    t = small_time(series, settings)
    log_base = _logprod((t, -bundle.mu0), (1 + _boundary_combo(series, t / 4, t, bundle.mu0), 1))
    exp_arg = _bdry_exp_arg(series, bundle, t, 0.0, t ** (-1 / bundle.delta1))
    return Evaluation(series.at('bdry_grad_sup', t), log_base, exp_arg=exp_arg, time=t)


def bdry_grad_large(series, bundle, settings):
    t = large_time(series, 1.0)
    log_base = _log(1 + _boundary_combo(series, t - 1, t, bundle.mu0))
    exp_arg = _bdry_exp_arg(series, bundle, t, t - 1, 1.0)
    return Evaluation(series.at('bdry_grad_sup', t), log_base, exp_arg=exp_arg, time=t)


def _small_exp_arg(series, bundle, t, pbar_power_inside=False):
    pbar0 = _pbar0(series)
    first = (1 + pbar0 ** bundle.z3) if pbar_power_inside else (1 + pbar0) ** bundle.z3
    return (t ** (-1 / bundle.delta1) * first * K1_cal(series, bundle, t) ** bundle.z3
            * (1 + _psi_norms(series, bundle, 0.0, t)) ** bundle.z2)


def _large_exp_arg(series, bundle, t, width):
    return ((1 + _pbar0(series) ** bundle.z3) * K1_cal(series, bundle, t) ** bundle.z3
            * (1 + _psi_norms(series, bundle, t - width, t)) ** bundle.z2)


def grad_ls_small(series, bundle, settings):
    s = settings.s
    if not s > 2:
        raise PreconditionError(f'gradient L^s bounds need s > 2, got {s}')
    t = small_time(series, settings)
    st, z3 = s_tilde(s, bundle.a), bundle.z3
    pbar0 = _pbar0(series)
    log_base = _logprod(
        (t, -1 - st * bundle.kappa1),
        (1 + pbar0, 2 * st * z3 + 2),
        (K1_cal(series, bundle, t), 2 * st * z3),
        (K2_cal(series, bundle, t), 2 * st),
        (1 + series.window_integral('G1', 0.0, t), 1),
    )
    lhs = series.at(grad_ls_id(s), t) ** s
    return Evaluation(lhs, log_base, exp_arg=_small_exp_arg(series, bundle, t), time=t)


def grad_ls_large(series, bundle, settings):
    s = settings.s
    if not s > 2:
        raise PreconditionError(f'gradient L^s bounds need s > 2, got {s}')
    t = large_time(series, 2.0)
    st, z3, alpha = s_tilde(s, bundle.a), bundle.z3, bundle.alpha
    log_base = _logprod(
        (1 + _pbar0(series), 2 * st * z3 + alpha),
        (K1_cal(series, bundle, t), 2 * st * z3 + alpha),
        (K2_cal(series, bundle, t, 2.0), 2 * st),
        (1 + series.window_integral('G1', t - 1, t), 1),
    )
    lhs = series.at(grad_ls_id(s), t) ** s
    return Evaluation(lhs, log_base, exp_arg=_large_exp_arg(series, bundle, t, 2.0), time=t)


def grad_inf_window(series, bundle, settings):
    T0, T, theta = window_of(series, settings)
    start, end = T0 + theta * T / 2, T0 + T
    lam = lambda_quantity(series, start, end, bundle.s0)
    interior = ((1 + 1 / (theta * T)) ** ((bundle.s1 + 1) / 2) * lam ** (bundle.s1 / 2)
                * series.spacetime_norm('grad_L2', start, end, 2.0))
    boundary = series.window_sup('bdry_grad_sup', start, end)
    lhs = series.window_sup('grad_Linf', T0 + theta * T, end)
    return Evaluation(lhs, _log(interior + boundary), window=(T0 + theta * T, end),
                      terms={'interior': interior, 'boundary': boundary, 'lambda': lam})


def grad_inf_small(series, bundle, settings):
    t = small_time(series, settings)
    b = bundle
    log_base = _logprod(
        (t, -b.kappa2 / 2),
        (1 + _pbar0(series), (b.s2_tilde * b.z3 + 1) * b.s3),
        (K1_cal(series, b, t), b.s2_tilde * b.z3 * b.s3),
        (K2_cal(series, b, t), b.s2_tilde * b.s3),
        (1 + series.window_integral('G1', 0.0, t), b.s3 / 2),
    )
    return Evaluation(series.at('grad_Linf', t), log_base,
                      exp_arg=_small_exp_arg(series, b, t, pbar_power_inside=True), time=t)


def grad_inf_large(series, bundle, settings):
    t = large_time(series, 3.0)
    b = bundle
    log_base = _logprod(
        (1 + _pbar0(series), b.kappa3 * b.s3),
        (K1_cal(series, b, t), b.kappa3 * b.s3),
        (K2_cal(series, b, t, 3.0), b.s2_tilde * b.s3),
        (1 + series.window_integral('G1', t - 2, t), b.s3 / 2),
    )
    return Evaluation(series.at('grad_Linf', t), log_base, exp_arg=_large_exp_arg(series, b, t, 2.0), time=t)


def pt_window(series, bundle, settings):
    T0, T, theta = window_of(series, settings)
    start, end = T0 + theta * T / 2, T0 + T
    lam = lambda_quantity(series, start, end, bundle.s0)
    interior = (lam ** (bundle.s1 / 2) * (1 + 1 / (theta * T)) ** ((bundle.s1 + 1) / 2)
                * series.spacetime_norm('pt_L2', start, end, 2.0))
    extra = series.window_sup('psi_t_bdry_sup', T0, end)
    lhs = series.window_sup('pt_Linf', T0 + theta * T, end)
    return Evaluation(lhs, _log(interior), extra=extra, window=(T0 + theta * T, end),
                      terms={'interior': interior, 'lambda': lam})


def pt_small(series, bundle, settings):
    t = small_time(series, settings)
    b = bundle
    log_base = _logprod(
        (t, -b.kappa4 / 2),
        (1 + _pbar0(series), b.kappa5),
        (1 + float(series.column('H_int')[0]), 0.5),
        (K1_cal(series, b, t), b.s2_tilde * (b.s3 - 1) * b.z3),
        (K2_cal(series, b, t), b.s2_tilde * (b.s3 - 1)),
        (1 + series.window_integral('G3', 0.0, t), b.s3 / 2),
    )
    extra = series.window_sup('psi_t_bdry_sup', 0.0, t)
    return Evaluation(series.at('pt_Linf', t), log_base, extra=extra,
                      exp_arg=_small_exp_arg(series, b, t), time=t)


def pt_large(series, bundle, settings):
    t = large_time(series, 3.0)
    b = bundle
    log_base = _logprod(
        (1 + _pbar0(series), b.kappa6),
        (K1_cal(series, b, t), b.kappa6),
        (K2_cal(series, b, t, 3.0), b.s2_tilde * (b.s3 - 1)),
        (1 + series.window_integral('G3', t - 2, t), b.s3 / 2),
    )
    extra = series.window_sup('psi_t_bdry_sup', t - 1, t)
    return Evaluation(series.at('pt_Linf', t), log_base, extra=extra,
                      exp_arg=_large_exp_arg(series, b, t, 3.0), time=t)


def _end_time(series, settings):
    T0, T, _ = window_of(series, settings)
    return T0 + T


def h_integral(series, bundle, settings):
    t = _end_time(series, settings)
    lhs = series.window_integral('H_int', 0.0, t)
    base = float(series.column('pbar_L2')[0]) ** 2 + series.window_integral('G1', 0.0, t)
    return Evaluation(lhs, _log(base), time=t)


def h_energy(series, bundle, settings):
    t = _end_time(series, settings)
    lhs = series.at('H_int', t) + series.window_integral('pbar_t_L2', 0.0, t, power=2.0)
    extra = float(series.column('H_int')[0]) + float(series.column('pbar_L2')[0]) ** 2
    return Evaluation(lhs, _log(series.window_integral('G3', 0.0, t)), extra=extra, time=t)


@dataclass(frozen=True)
class TheoremShape:
    theorem_id: str
    lhs: str
    rhs: str
    evaluate: object
    columns: tuple
    has_exponential: bool = False
    needs_s: bool = False


_PSI = ('grad_psi_Laq', 'psi_t_Laq')
_K = ('A_alpha', 'K2_cal', 'pbar_Lalpha') + _PSI

THEOREMS = {shape.theorem_id: shape for shape in (
    TheoremShape('linf_window', 'sup_[T0+thT,T0+T] |pbar|_inf', 'C * six-term bound in ||pbar||_{L^alpha(Q)}',
                 linf_window, ('sup_pbar', 'pbar_Lalpha') + _PSI),
    TheoremShape('linf_window_simple', 'sup_[T0+thT,T0+T] |pbar|_inf',
                 'C (1+(thT)^(-1/d1)+T^z1)(1+Psi norms)^z2 (1+||pbar||)^z3',
                 linf_window_simple, ('sup_pbar', 'pbar_Lalpha') + _PSI),
    TheoremShape('linf_small_time', '|pbar(t)|_inf, t<=3', 'C t^(-1/d1)(1+|pbar0|+EnvA^(1/(alpha-a)))^z3 (1+Psi norms)^z2',
                 linf_small, ('sup_pbar', 'EnvA', 'pbar_Lalpha') + _PSI),
    TheoremShape('linf_large_time', '|pbar(t)|_inf, t>=1', 'C (1+|pbar0|+EnvA^(1/(alpha-a)))^z3 (1+Psi norms on (t-1,t))^z2',
                 linf_large, ('sup_pbar', 'EnvA', 'pbar_Lalpha') + _PSI),
    TheoremShape('bdry_grad_small_time', '|grad p(t)|_inf(Gamma), t<=3', 'C t^(-mu0)(1+max Psi data) exp(C\' ...)',
                 bdry_grad_small, ('bdry_grad_sup', 'psi_t_sup', 'grad_psi_sup', 'hess_psi_sup') + _K,
                 has_exponential=True),
    TheoremShape('bdry_grad_large_time', '|grad p(t)|_inf(Gamma), t>1', 'C (1+max_[t-1,t] Psi data) exp(C\' ...)',
                 bdry_grad_large, ('bdry_grad_sup', 'psi_t_sup', 'grad_psi_sup', 'hess_psi_sup') + _K,
                 has_exponential=True),
    TheoremShape('grad_ls_small_time', 'int |grad p(t)|^s, t<=3', 'C t^(-1-s~k1) ... K1^(2s~z3) K2^(2s~) (1+int G1) exp(C\' ...)',
                 grad_ls_small, ('G1', 'K1_cal') + _K, has_exponential=True, needs_s=True),
    TheoremShape('grad_ls_large_time', 'int |grad p(t)|^s, t>2', 'C ... K1 K2bar (1+int_(t-1)^t G1) exp(C\' ...)',
                 grad_ls_large, ('G1', 'K1_cal') + _K, has_exponential=True, needs_s=True),
    TheoremShape('grad_linf_window', 'sup_[T0+thT,T0+T] |grad p|_inf',
                 'C[(1+(thT)^-1)^((s1+1)/2) lambda^(s1/2) ||grad p||_L2 + sup |grad p|_Gamma]',
                 grad_inf_window, ('grad_Linf', 'lambda', 'grad_L2', 'bdry_grad_sup')),
    TheoremShape('grad_linf_small_time', '|grad p(t)|_inf, t<=3', 'C t^(-k2/2) ... (1+int G1)^(s3/2) exp(C\' ...)',
                 grad_inf_small, ('grad_Linf', 'G1', 'K1_cal') + _K, has_exponential=True),
    TheoremShape('grad_linf_large_time', '|grad p(t)|_inf, t>3', 'C ... K2tilde (1+int_(t-2)^t G1)^(s3/2) exp(C\' ...)',
                 grad_inf_large, ('grad_Linf', 'G1', 'K1_cal') + _K, has_exponential=True),
    TheoremShape('pt_linf_window', 'sup_[T0+thT,T0+T] |p_t|_inf',
                 'C lambda^(s1/2)(1+(thT)^-1)^((s1+1)/2) ||p_t||_L2 + max |psi_t|_Gamma',
                 pt_window, ('pt_Linf', 'lambda', 'pt_L2', 'psi_t_bdry_sup')),
    TheoremShape('pt_linf_small_time', '|p_t(t)|_inf, t<=3', 'C t^(-k4/2) ... (1+int G3)^(s3/2) exp(C\' ...) + sup |psi_t|_Gamma',
                 pt_small, ('pt_Linf', 'H_int', 'G3', 'psi_t_bdry_sup', 'K1_cal') + _K, has_exponential=True),
    TheoremShape('pt_linf_large_time', '|p_t(t)|_inf, t>3', 'C ... K2tilde (1+int_(t-2)^t G3)^(s3/2) exp(C\' ...) + sup |psi_t|_Gamma',
                 pt_large, ('pt_Linf', 'G3', 'psi_t_bdry_sup', 'K1_cal') + _K, has_exponential=True),
    TheoremShape('h_integral', 'int_0^t int H(|grad p|)', 'C (||pbar0||_2^2 + int_0^t G1)',
                 h_integral, ('H_int', 'pbar_L2', 'G1')),
    TheoremShape('h_energy', 'int H(|grad p(t)|) + int_0^t int pbar_t^2',
                 'int [H(|grad p0|) + pbar0^2] + C int_0^t G3',
                 h_energy, ('H_int', 'pbar_t_L2', 'pbar_L2', 'G3')),
)}


def theorem(theorem_id):
    if theorem_id not in THEOREMS:
        raise RegistryError(f'unknown theorem id {theorem_id!r} (known: {", ".join(THEOREMS)})')
    return THEOREMS[theorem_id]


def evaluate(theorem_id, series, bundle, settings):
    shape = theorem(theorem_id)
    columns = shape.columns + ((grad_ls_id(settings.s),) if shape.needs_s else ())
    require(series, columns)
    return shape.evaluate(series, bundle, settings)
