"""Arithmetic expression language for boundary, initial and manufactured data.

Variables x, y, t; operators + - * / ^; functions sin, cos, exp, sqrt, abs;
constants pi, e. Expressions become sympy objects so derivatives can be taken
symbolically, and are compiled to numpy callables with lambdify.
"""
import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from ..errors import ConfigError

x, y, t = sp.symbols('x y t', real=True)
SPACE_SYMBOLS = (x, y)

_LOCALS = {
    'x': x, 'y': y, 't': t,
    'sin': sp.sin, 'cos': sp.cos, 'exp': sp.exp, 'sqrt': sp.sqrt, 'abs': sp.Abs,
    'pi': sp.pi, 'e': sp.E,
}
_GLOBALS = {
    'Integer': sp.Integer, 'Float': sp.Float, 'Rational': sp.Rational, 'Symbol': sp.Symbol,
}
_ALLOWED_FUNCS = {sp.sin, sp.cos, sp.exp, sp.Abs}
_TRANSFORMS = standard_transformations + (convert_xor,)


def parse_expression(text, dim=2):
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ConfigError(f'expected a non-empty expression string, got {text!r}')
    try:
        expr = parse_expr(text, local_dict=dict(_LOCALS), global_dict=dict(_GLOBALS),
                          transformations=_TRANSFORMS)
    except Exception as e:
        raise ConfigError(f'cannot parse expression {text!r}: {e}') from e

    if not isinstance(expr, sp.Expr):
        raise ConfigError(f'{text!r} is not an arithmetic expression')
    allowed = {x, t} if dim == 1 else {x, y, t}
    unknown = expr.free_symbols - allowed
    if unknown:
        names = ', '.join(sorted(str(s) for s in unknown))
        raise ConfigError(f'unknown variable(s) {names} in {text!r} (allowed: {sorted(map(str, allowed))})')
    for call in expr.atoms(sp.Function):
        if isinstance(call, AppliedUndef) or call.func not in _ALLOWED_FUNCS:
            raise ConfigError(f'unknown function {call.func} in {text!r}')
    return expr


def variables(dim):
    return SPACE_SYMBOLS[:dim] + (t,)


def compile_expression(expr, dim):
    """numpy callable f(*coords, t) broadcasting constants to the argument shape."""
    fn = sp.lambdify(variables(dim), expr, modules='numpy')

    def evaluate(*args):
        arrays = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
        return np.broadcast_to(np.asarray(fn(*arrays), dtype=float), shape).copy()

    return evaluate


def is_time_independent(expr):
    return sp.simplify(sp.diff(expr, t)) == 0
