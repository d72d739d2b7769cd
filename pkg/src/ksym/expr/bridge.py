"""Round trip between rational expressions and sympy, atoms as plain symbols."""
from __future__ import annotations

from fractions import Fraction

import sympy

from .nodes import Div, Expr
from .normal import _poly_to_expr, atom_key, normalize, rational_parts


def to_sympy(e: Expr):
    """Return ``(sympy_expr, atoms)`` where ``atoms`` maps sympy symbols back to atoms."""
    p, q = rational_parts(e)
    atoms = sorted({a for poly in (p, q) for m in poly for a, _ in m}, key=atom_key)
    syms = sympy.symbols(f"a0:{len(atoms)}") if atoms else ()
    lookup = dict(zip(atoms, syms))

    def build(poly):
        terms = []
        for m, c in poly.items():
            term = sympy.Rational(c.numerator, c.denominator)
            for a, k in m:
                term *= lookup[a] ** k
            terms.append(term)
        return sympy.Add(*terms)

    return build(p) / build(q), dict(zip(syms, atoms))


def from_sympy(sexpr, atoms: dict) -> Expr:
    """Inverse of :func:`to_sympy` for rational results over the same atoms."""
    num, den = sympy.fraction(sympy.cancel(sympy.together(sexpr)))
    gens = list(atoms)
    stray = (num.free_symbols | den.free_symbols) - set(gens)
    if stray:
        raise ValueError(f"result has symbols outside the atom set: {stray}")

    def back(poly_expr):
        if not gens:
            c = sympy.Rational(poly_expr)
            return _poly_to_expr({(): _frac(c)} if c != 0 else {})
        poly = sympy.Poly(poly_expr, *gens)
        out = {}
        for exps, c in poly.terms():
            m = tuple((atoms[gens[i]], k) for i, k in enumerate(exps) if k)
            out[m] = _frac(c)
        return _poly_to_expr(out)

    return normalize(Div(back(num), back(den)))


def _frac(c):
    c = sympy.Rational(c)
    return Fraction(int(c.p), int(c.q))
