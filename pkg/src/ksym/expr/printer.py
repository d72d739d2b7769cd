"""Render expressions back into the input grammar."""
from __future__ import annotations

from fractions import Fraction

from .nodes import Add, Const, Div, Expr, Func, Mul, Neg, Pow, Sub, Sym

_SUM, _PROD, _UNARY, _POW, _ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, (Add, Sub)):
        return _SUM
    if isinstance(e, (Mul, Div)):
        return _PROD
    if isinstance(e, Neg):
        return _UNARY
    if isinstance(e, Pow):
        return _POW
    if isinstance(e, Const):
        v = e.value
        if v < 0:
            return _UNARY
        if v.denominator != 1:
            return _PROD
    return _ATOM


def _const_text(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_text(e)
    return f"({s})" if _prec(e) < min_prec else s


def _negated_term(t: Expr):
    """Return the positive counterpart of a visibly negative term, else None."""
    if isinstance(t, Const) and t.value < 0:
        return Const(-t.value)
    if isinstance(t, Neg):
        return t.arg
    if isinstance(t, Mul) and isinstance(t.children[0], Const) and t.children[0].value < 0:
        c = -t.children[0].value
        rest = t.children[1:]
        if c == 1:
            return rest[0] if len(rest) == 1 else Mul(*rest)
        return Mul(Const(c), *rest)
    return None


def to_text(e: Expr) -> str:
    if isinstance(e, Const):
        return _const_text(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _POW)
    if isinstance(e, Pow):
        base = _wrap(e.base, _ATOM)
        n = e.exponent
        return f"{base}^{n}" if n >= 0 else f"{base}^({n})"
    if isinstance(e, Add):
        parts = [_wrap(e.children[0], _SUM)]
        for t in e.children[1:]:
            pos = _negated_term(t)
            if pos is not None:
                parts.append(" - " + _wrap(pos, _PROD))
            else:
                parts.append(" + " + _wrap(t, _PROD))
        return "".join(parts)
    if isinstance(e, Sub):
        return f"{_wrap(e.children[0], _SUM)} - {_wrap(e.children[1], _PROD)}"
    if isinstance(e, Mul):
        first, *rest = e.children
        head = f"({to_text(first)})" if isinstance(first, Const) and _prec(first) < _ATOM else _wrap(first, _PROD)
        return "*".join([head] + [_wrap(f, _POW) for f in rest])
    if isinstance(e, Div):
        return f"{_wrap(e.num, _PROD)}/{_wrap(e.den, _POW)}"
    raise TypeError(f"unknown node {type(e).__name__}")
