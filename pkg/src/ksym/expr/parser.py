"""Pratt parser for the coordinate-expression grammar.

Identifiers are ``q_<i>``, ``p_<A>_<i>`` and ``t_<A>`` (1-based), literals are
integers or decimals, operators ``+ - * / ^`` and calls ``name(expr)`` for the
functions in :data:`FUNCTIONS`.  All binary operators associate to the left;
``^`` binds tighter than unary minus, which binds tighter than ``* /``.
"""
from __future__ import annotations

import re
from fractions import Fraction

from .nodes import FUNCTIONS, Add, Const, Div, Expr, Func, Mul, Neg, Pow, Sub, Sym


class ParseError(ValueError):
    """Syntax error; ``offset`` is the byte offset into the UTF-8 source."""

    def __init__(self, message: str, text: str, pos: int):
        self.offset = len(text[:pos].encode("utf-8"))
        self.text = text
        super().__init__(f"{message} at byte offset {self.offset}")


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, text: str, pos: int):
        super().__init__(f"unknown identifier {name!r}", text, pos)
        self.name = name


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)

_COORD_RE = re.compile(r"q_([1-9]\d*)$|p_([1-9]\d*)_([1-9]\d*)$|t_([1-9]\d*)$")

# binding powers of the infix operators
_INFIX = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_BP = 30


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def valid_symbol(name: str, chart, allow_params: bool) -> bool:
    m = _COORD_RE.match(name)
    if m is None:
        return False
    if chart is None:
        return allow_params or m.group(4) is None
    n, k = chart.n, chart.k
    if m.group(1):
        return int(m.group(1)) <= n
    if m.group(2):
        return int(m.group(2)) <= k and int(m.group(3)) <= n
    return allow_params and int(m.group(4)) <= k


class _Parser:
    def __init__(self, text: str, chart, allow_params: bool):
        self.text = text
        self.chart = chart
        self.allow_params = allow_params
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.advance()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", self.text, pos)

    def error(self, message, pos):
        return ParseError(message, self.text, pos)

    def parse(self) -> Expr:
        e = self.expression(0)
        kind, val, pos = self.peek()
        if kind != "end":
            raise self.error(f"unexpected token {val!r}", pos)
        return e

    def expression(self, min_bp: int) -> Expr:
        left = self.prefix()
        while True:
            kind, val, pos = self.peek()
            if kind != "op" or val not in _INFIX:
                break
            bp = _INFIX[val]
            if bp <= min_bp:
                break
            self.advance()
            if val == "^":
                left = Pow(left, self.exponent())
                continue
            right = self.expression(bp)
            if val == "+":
                left = Add(left, right)
            elif val == "-":
                left = Sub(left, right)
            elif val == "*":
                left = Mul(left, right)
            else:
                left = Div(left, right)
        return left

    def exponent(self) -> int:
        # integer literal, optionally signed or parenthesized
        kind, val, pos = self.peek()
        sign = 1
        if val == "(":
            self.advance()
            n = self.exponent()
            self.expect(")")
            return n
        if kind == "op" and val == "-":
            self.advance()
            sign = -1
            kind, val, pos = self.peek()
        if kind != "num":
            raise self.error("exponent must be an integer literal", pos)
        self.advance()
        if not val.isdigit():
            raise self.error(f"non-integer exponent {val!r}", pos)
        return sign * int(val)

    def prefix(self) -> Expr:
        kind, val, pos = self.advance()
        if kind == "num":
            return Const(Fraction(val))
        if kind == "name":
            nxt = self.peek()
            if nxt[1] == "(" and nxt[0] == "op":
                if val not in FUNCTIONS:
                    raise UnknownIdentifierError(val, self.text, pos)
                self.advance()
                arg = self.expression(0)
                self.expect(")")
                return Func(val, arg)
            if not valid_symbol(val, self.chart, self.allow_params):
                raise UnknownIdentifierError(val, self.text, pos)
            return Sym(val)
        if kind == "op" and val == "(":
            e = self.expression(0)
            self.expect(")")
            return e
        if kind == "op" and val == "-":
            return Neg(self.expression(_UNARY_BP))
        if kind == "end":
            raise self.error("unexpected end of input", pos)
        raise self.error(f"unexpected token {val!r}", pos)


def parse(text: str, chart=None, allow_params: bool = True) -> Expr:
    """Parse ``text`` into an expression tree.

    With a chart, coordinate indices are range-checked against its ``n`` and
    ``k``; base parameters ``t_A`` are accepted only if ``allow_params``.
    """
    return _Parser(text, chart, allow_params).parse()
