"""Canonical forms, differentiation and substitution.

An expression is normalized by reading it as a rational function P/Q whose
indeterminates ("atoms") are the coordinate symbols and the function
applications (with their arguments normalized recursively).  P and Q are
sparse polynomials with exact rational coefficients; their gcd is removed
and Q is scaled so that its leading coefficient is 1.  Atoms are ordered by a
fixed key, so the output tree depends only on the value of P/Q.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import isqrt

import sympy

from .nodes import (
    ONE,
    ZERO,
    Add,
    Const,
    Div,
    Expr,
    Func,
    Mul,
    Neg,
    Pow,
    Sub,
    Sym,
    add_all,
    mul_all,
    symbol_sort_key,
)
from .printer import to_text

# Poly: dict mapping a monomial to its (nonzero) coefficient.
# Monomial: tuple of (atom, exponent) pairs sorted by atom_key, exponents > 0.

_atom_key_cache: dict[Expr, tuple] = {}


def atom_key(a: Expr) -> tuple:
    key = _atom_key_cache.get(a)
    if key is None:
        if isinstance(a, Sym):
            key = (0, symbol_sort_key(a.name))
        else:
            key = (1, a.name, to_text(a.arg))
        _atom_key_cache[a] = key
    return key


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for a, e in m2:
        d[a] = d.get(a, 0) + e
    return tuple(sorted(d.items(), key=lambda ae: atom_key(ae[0])))


def _padd(p, q, sign=1):
    out = dict(p)
    for m, c in q.items():
        v = out.get(m, 0) + sign * c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def _pmul(p, q):
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            v = out.get(m, 0) + c1 * c2
            if v:
                out[m] = v
            else:
                out.pop(m, None)
    return out


def _ppow(p, n):
    result = {(): Fraction(1)}
    base = p
    while n:
        if n & 1:
            result = _pmul(result, base)
        n >>= 1
        if n:
            base = _pmul(base, base)
    return result


def _pscale(p, c):
    return {m: v * c for m, v in p.items()} if c else {}


def _const_poly(c) -> dict:
    c = Fraction(c)
    return {(): c} if c else {}


_ONE_POLY = {(): Fraction(1)}


def _is_const_poly(p) -> bool:
    return not p or (len(p) == 1 and () in p)


def _const_of(p) -> Fraction:
    return p.get((), Fraction(0))


def _fold_func(name: str, arg: Expr):
    """Exact values at a few constant arguments; None if not folded."""
    if not isinstance(arg, Const):
        return None
    v = arg.value
    if v == 0:
        return {"sin": 0, "cos": 1, "exp": 1, "sqrt": 0}.get(name)
    if name == "log" and v == 1:
        return 0
    if name == "sqrt" and v > 0:
        n, d = isqrt(v.numerator), isqrt(v.denominator)
        if n * n == v.numerator and d * d == v.denominator:
            return Fraction(n, d)
    return None


def _to_rat(e: Expr):
    if isinstance(e, Const):
        return _const_poly(e.value), _ONE_POLY
    if isinstance(e, Sym):
        return {((e, 1),): Fraction(1)}, _ONE_POLY
    if isinstance(e, Func):
        arg = normalize(e.arg)
        folded = _fold_func(e.name, arg)
        if folded is not None:
            return _const_poly(folded), _ONE_POLY
        return {((Func(e.name, arg), 1),): Fraction(1)}, _ONE_POLY
    if isinstance(e, Neg):
        p, q = _to_rat(e.arg)
        return _pscale(p, -1), q
    if isinstance(e, (Add, Sub)):
        kids = e.children
        p, q = _to_rat(kids[0])
        sign = -1 if isinstance(e, Sub) else 1
        for kid in kids[1:]:
            p2, q2 = _to_rat(kid)
            if q2 == q:
                p = _padd(p, p2, sign)
            elif _is_const_poly(q2) and _is_const_poly(q):
                c, c2 = _const_of(q), _const_of(q2)
                p = _padd(_pscale(p, 1 / c), _pscale(p2, 1 / c2), sign)
                q = _ONE_POLY
            else:
                p = _padd(_pmul(p, q2), _pmul(p2, q), sign)
                q = _pmul(q, q2)
        return p, q
    if isinstance(e, Mul):
        p, q = _ONE_POLY, _ONE_POLY
        for kid in e.children:
            p2, q2 = _to_rat(kid)
            if not p2:
                return {}, _ONE_POLY
            p, q = _pmul(p, p2), _pmul(q, q2)
        return p, q
    if isinstance(e, Div):
        p1, q1 = _to_rat(e.num)
        p2, q2 = _to_rat(e.den)
        if not p2:
            raise ZeroDivisionError(f"division by an expression that is identically zero: {e}")
        return _pmul(p1, q2), _pmul(q1, p2)
    if isinstance(e, Pow):
        p, q = _to_rat(e.base)
        n = e.exponent
        if n < 0:
            if not p:
                raise ZeroDivisionError(f"negative power of zero: {e}")
            p, q, n = q, p, -n
        return _ppow(p, n), _ppow(q, n)
    raise TypeError(f"unknown node {type(e).__name__}")


def _mono_order(m) -> tuple:
    deg = sum(e for _, e in m)
    return (-deg, tuple((atom_key(a), -e) for a, e in m))


def _to_sympy(polys):
    atoms = sorted({a for p in polys for m in p for a, _ in m}, key=atom_key)
    index = {a: i for i, a in enumerate(atoms)}
    gens = sympy.symbols(f"x0:{len(atoms)}") if atoms else ()
    out = []
    for p in polys:
        terms = {}
        for m, c in p.items():
            exps = [0] * len(atoms)
            for a, e in m:
                exps[index[a]] = e
            terms[tuple(exps)] = sympy.Rational(c.numerator, c.denominator)
        out.append(sympy.Poly.from_dict(terms, *gens, domain="QQ"))
    return atoms, out


def _from_sympy(poly, atoms) -> dict:
    out = {}
    for exps, c in poly.terms():
        if c == 0:
            continue
        m = tuple((atoms[i], e) for i, e in enumerate(exps) if e)
        out[m] = Fraction(int(c.p), int(c.q))
    return out


def _cancel(p, q):
    if not p:
        return {}, _ONE_POLY
    if _is_const_poly(q):
        return _pscale(p, 1 / _const_of(q)), _ONE_POLY
    if len(q) == 1:
        # monomial denominator: strip common atom powers without a gcd call
        (qm, qc), = q.items()
        common = dict(qm)
        for m in p:
            md = dict(m)
            for a in list(common):
                common[a] = min(common[a], md.get(a, 0))
                if common[a] == 0:
                    del common[a]
        if common:
            def strip(m):
                return tuple((a, e - common.get(a, 0)) for a, e in m if e - common.get(a, 0))

            p = {strip(m): c for m, c in p.items()}
            qm = strip(qm)
        q = {qm: qc}
    else:
        atoms, (sp, sq) = _to_sympy([p, q])
        g = sp.gcd(sq)
        if g.total_degree() > 0:
            p = _from_sympy(sp.exquo(g), atoms)
            q = _from_sympy(sq.exquo(g), atoms)
    if _is_const_poly(q):
        return _pscale(p, 1 / _const_of(q)), _ONE_POLY
    lead = min(q, key=_mono_order)
    c = q[lead]
    return _pscale(p, 1 / c), _pscale(q, 1 / c)


def _poly_to_expr(p) -> Expr:
    if not p:
        return ZERO
    terms = []
    for m in sorted(p, key=_mono_order):
        c = p[m]
        factors = [a if e == 1 else Pow(a, e) for a, e in m]
        if not factors:
            terms.append(Const(c))
            continue
        body = factors[0] if len(factors) == 1 else Mul(*factors)
        if c == 1:
            terms.append(body)
        elif c == -1:
            terms.append(Neg(body))
        else:
            terms.append(Mul(Const(c), *factors))
    return terms[0] if len(terms) == 1 else Add(*terms)


def rational_parts(e: Expr):
    """Return the cancelled numerator/denominator polynomials of ``e``."""
    return _cancel(*_to_rat(e))


@lru_cache(maxsize=1 << 16)
def normalize(e: Expr) -> Expr:
    """Canonical expanded form over a common denominator (idempotent)."""
    if isinstance(e, (Const, Sym)):
        return e
    p, q = rational_parts(e)
    num = _poly_to_expr(p)
    if q == _ONE_POLY:
        return num
    return Div(num, _poly_to_expr(q))


def is_polynomial_in(e: Expr, name: str) -> bool:
    """True if ``normalize(e)`` is a polynomial in ``name`` (no function atom holds it)."""
    p, q = rational_parts(e)
    for poly in (p, q):
        for m in poly:
            for a, _ in m:
                if isinstance(a, Func) and name in a.symbols:
                    return False
    return not any(name in a.symbols for m in q for a, _ in m)


def coefficients_in(e: Expr, name: str) -> dict[int, Expr]:
    """Split a polynomial-in-``name`` expression into {power: coefficient}."""
    if not is_polynomial_in(e, name):
        raise ValueError(f"{e} is not polynomial in {name}")
    p, q = rational_parts(e)
    target = Sym(name)
    parts: dict[int, dict] = {}
    for m, c in p.items():
        power = 0
        rest = []
        for a, k in m:
            if a == target:
                power = k
            else:
                rest.append((a, k))
        bucket = parts.setdefault(power, {})
        bucket[tuple(rest)] = bucket.get(tuple(rest), 0) + c
    den = _poly_to_expr(q)
    out = {}
    for power, poly in parts.items():
        num = _poly_to_expr(poly)
        out[power] = num if q == _ONE_POLY else normalize(Div(num, den))
    return out


def _d(e: Expr, v: str) -> Expr:
    if v not in e.symbols:
        return ZERO
    if isinstance(e, Sym):
        return ONE
    if isinstance(e, Neg):
        d = _d(e.arg, v)
        return ZERO if d.is_const(0) else Neg(d)
    if isinstance(e, Add):
        return add_all(_d(t, v) for t in e.children)
    if isinstance(e, Sub):
        a, b = (_d(t, v) for t in e.children)
        if b.is_const(0):
            return a
        return Neg(b) if a.is_const(0) else Sub(a, b)
    if isinstance(e, Mul):
        kids = e.children
        terms = []
        for i, kid in enumerate(kids):
            dk = _d(kid, v)
            if dk.is_const(0):
                continue
            terms.append(mul_all(kids[:i] + (dk,) + kids[i + 1 :]))
        return add_all(terms)
    if isinstance(e, Div):
        u, w = e.num, e.den
        du, dw = _d(u, v), _d(w, v)
        top = add_all([mul_all([du, w]), Neg(mul_all([u, dw])) if not dw.is_const(0) else ZERO])
        return Div(top, Pow(w, 2))
    if isinstance(e, Pow):
        n = e.exponent
        if n == 0:
            return ZERO
        db = _d(e.base, v)
        return mul_all([Const(n), Pow(e.base, n - 1), db])
    if isinstance(e, Func):
        a = e.arg
        da = _d(a, v)
        if e.name == "sin":
            outer = Func("cos", a)
        elif e.name == "cos":
            outer = Neg(Func("sin", a))
        elif e.name == "exp":
            outer = e
        elif e.name == "log":
            return Div(da, a)
        else:  # sqrt
            return Div(da, Mul(Const(2), e))
        return mul_all([outer, da])
    raise TypeError(f"unknown node {type(e).__name__}")


@lru_cache(maxsize=1 << 16)
def differentiate(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to the symbol ``v``, normalized."""
    return normalize(_d(e, v))


def _subst(e: Expr, mapping: dict) -> Expr:
    if isinstance(e, Sym):
        return mapping.get(e.name, e)
    if isinstance(e, Const) or not (e.symbols & mapping.keys()):
        return e
    if isinstance(e, Neg):
        return Neg(_subst(e.arg, mapping))
    if isinstance(e, Add):
        return Add(*(_subst(t, mapping) for t in e.children))
    if isinstance(e, Sub):
        return Sub(*(_subst(t, mapping) for t in e.children))
    if isinstance(e, Mul):
        return Mul(*(_subst(t, mapping) for t in e.children))
    if isinstance(e, Div):
        return Div(_subst(e.num, mapping), _subst(e.den, mapping))
    if isinstance(e, Pow):
        return Pow(_subst(e.base, mapping), e.exponent)
    if isinstance(e, Func):
        return Func(e.name, _subst(e.arg, mapping))
    raise TypeError(f"unknown node {type(e).__name__}")


def substitute(e: Expr, mapping: dict[str, Expr]) -> Expr:
    """Replace symbols by expressions simultaneously; result is normalized."""
    return normalize(_subst(e, dict(mapping)))
