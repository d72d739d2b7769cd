"""Immutable expression trees.

Every node caches its hash, so trees can be used as dict keys and in
``functools.lru_cache`` without re-walking them.
"""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Union

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")

Number = Union[int, Fraction]


class Expr:
    __slots__ = ("_key", "_hash", "_symbols")

    def __init__(self, key: tuple):
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash((type(self).__name__, key)))
        object.__setattr__(self, "_symbols", None)

    # structural identity
    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return type(self) is type(other) and self._hash == other._hash and self._key == other._key

    def __hash__(self):
        return self._hash

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @property
    def children(self) -> tuple["Expr", ...]:
        return ()

    @property
    def symbols(self) -> frozenset[str]:
        if self._symbols is None:
            out: set[str] = set()
            stack: list[Expr] = [self]
            while stack:
                node = stack.pop()
                if isinstance(node, Sym):
                    out.add(node.name)
                stack.extend(node.children)
            object.__setattr__(self, "_symbols", frozenset(out))
        return self._symbols

    def is_const(self, value=None) -> bool:
        return False

    # arithmetic sugar for building trees by hand
    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __pow__(self, exponent: int):
        return Pow(self, exponent)

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        from .printer import to_text

        return to_text(self)

    def __repr__(self):
        return f"Expr({str(self)!r})"


class Const(Expr):
    __slots__ = ()

    def __init__(self, value: Number):
        v = Fraction(value)
        super().__init__((v,))

    @property
    def value(self) -> Fraction:
        return self._key[0]

    def is_const(self, value=None) -> bool:
        return value is None or self._key[0] == value


class Sym(Expr):
    __slots__ = ()

    def __init__(self, name: str):
        super().__init__((name,))

    @property
    def name(self) -> str:
        return self._key[0]


class Neg(Expr):
    __slots__ = ()

    def __init__(self, arg: Expr):
        super().__init__((arg,))

    @property
    def arg(self) -> Expr:
        return self._key[0]

    @property
    def children(self):
        return self._key


class Add(Expr):
    """n-ary sum; the parser only ever builds the binary case."""

    __slots__ = ()

    def __init__(self, *terms: Expr):
        if len(terms) < 2:
            raise ValueError("Add needs at least two terms")
        super().__init__(tuple(terms))

    @property
    def children(self):
        return self._key


class Sub(Expr):
    __slots__ = ()

    def __init__(self, left: Expr, right: Expr):
        super().__init__((left, right))

    @property
    def children(self):
        return self._key


class Mul(Expr):
    __slots__ = ()

    def __init__(self, *factors: Expr):
        if len(factors) < 2:
            raise ValueError("Mul needs at least two factors")
        super().__init__(tuple(factors))

    @property
    def children(self):
        return self._key


class Div(Expr):
    __slots__ = ()

    def __init__(self, num: Expr, den: Expr):
        super().__init__((num, den))

    @property
    def num(self) -> Expr:
        return self._key[0]

    @property
    def den(self) -> Expr:
        return self._key[1]

    @property
    def children(self):
        return self._key


class Pow(Expr):
    __slots__ = ()

    def __init__(self, base: Expr, exponent: int):
        if isinstance(exponent, bool) or not isinstance(exponent, int):
            raise TypeError(f"exponent must be an int, got {exponent!r}")
        super().__init__((base, exponent))

    @property
    def base(self) -> Expr:
        return self._key[0]

    @property
    def exponent(self) -> int:
        return self._key[1]

    @property
    def children(self):
        return (self._key[0],)


class Func(Expr):
    __slots__ = ()

    def __init__(self, name: str, arg: Expr):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        super().__init__((name, arg))

    @property
    def name(self) -> str:
        return self._key[0]

    @property
    def arg(self) -> Expr:
        return self._key[1]

    @property
    def children(self):
        return (self._key[1],)


ZERO = Const(0)
ONE = Const(1)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        return Const(x)
    if isinstance(x, float):
        return Const(Fraction(repr(x)))
    raise TypeError(f"cannot convert {x!r} to an expression")


def sym(name: str) -> Sym:
    return Sym(name)


def func(name: str, arg) -> Func:
    return Func(name, as_expr(arg))


_NAME_RE = re.compile(r"[A-Za-z]+|\d+")


def symbol_sort_key(name: str) -> tuple:
    """Natural ordering: q_2 < q_10, p_1_2 < p_2_1."""
    return tuple((0, int(tok)) if tok.isdigit() else (1, tok) for tok in _NAME_RE.findall(name)) + (
        (2, name),
    )


def add_all(terms: Iterable[Expr]) -> Expr:
    """Sum with trivial zero dropping; no canonicalization."""
    ts = [t for t in terms if not t.is_const(0)]
    if not ts:
        return ZERO
    if len(ts) == 1:
        return ts[0]
    return Add(*ts)


def mul_all(factors: Iterable[Expr]) -> Expr:
    fs = []
    for f in factors:
        if f.is_const(0):
            return ZERO
        if not f.is_const(1):
            fs.append(f)
    if not fs:
        return ONE
    if len(fs) == 1:
        return fs[0]
    return Mul(*fs)
