"""Numeric evaluation and the randomized zero test."""
from __future__ import annotations

import enum
import math
import os
from typing import Mapping

import numpy as np

from .nodes import Add, Const, Div, Expr, Func, Mul, Neg, Pow, Sub, Sym
from .normal import normalize

DEFAULT_BOX = (0.5, 1.5)


class SingularEvaluationError(ArithmeticError):
    def __init__(self, subexpr: Expr, reason: str):
        self.subexpr = subexpr
        self.reason = reason
        super().__init__(f"{reason} in {subexpr}")


class EvaluationDomainError(ArithmeticError):
    """No singularity-free sample point could be found."""


class Verdict(enum.Enum):
    ZERO = "Zero"
    PROBABLY_ZERO = "ProbablyZero"
    NONZERO = "NonZero"

    @property
    def vanishes(self) -> bool:
        return self is not Verdict.NONZERO

    def __str__(self):
        return self.value


def combine(verdicts) -> Verdict:
    """Worst case over a collection: any NonZero wins, then ProbablyZero."""
    out = Verdict.ZERO
    for v in verdicts:
        if v is Verdict.NONZERO:
            return v
        if v is Verdict.PROBABLY_ZERO:
            out = v
    return out


_SCALAR_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "log": math.log, "sqrt": math.sqrt}


def evaluate(e: Expr, point: Mapping[str, float]) -> float:
    """Double-precision value of ``e`` at ``point``.

    Raises :class:`SingularEvaluationError` naming the offending subexpression
    on division by zero, log of a non-positive number, sqrt of a negative
    number, or overflow.
    """
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Sym):
        try:
            return float(point[e.name])
        except KeyError:
            raise KeyError(f"point has no value for {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, point)
    if isinstance(e, Add):
        return math.fsum(evaluate(t, point) for t in e.children)
    if isinstance(e, Sub):
        a, b = e.children
        return evaluate(a, point) - evaluate(b, point)
    if isinstance(e, Mul):
        out = 1.0
        for f in e.children:
            out *= evaluate(f, point)
        return out
    if isinstance(e, Div):
        den = evaluate(e.den, point)
        if den == 0.0:
            raise SingularEvaluationError(e, "division by zero")
        return evaluate(e.num, point) / den
    if isinstance(e, Pow):
        b = evaluate(e.base, point)
        if b == 0.0 and e.exponent < 0:
            raise SingularEvaluationError(e, "negative power of zero")
        try:
            return b**e.exponent
        except OverflowError:
            raise SingularEvaluationError(e, "overflow") from None
    if isinstance(e, Func):
        a = evaluate(e.arg, point)
        if e.name == "log" and a <= 0.0:
            raise SingularEvaluationError(e, "log of a non-positive number")
        if e.name == "sqrt" and a < 0.0:
            raise SingularEvaluationError(e, "sqrt of a negative number")
        try:
            return _SCALAR_FUNCS[e.name](a)
        except OverflowError:
            raise SingularEvaluationError(e, "overflow") from None
    raise TypeError(f"unknown node {type(e).__name__}")


_ARRAY_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "sqrt": np.sqrt}


def _eval_array(e: Expr, env, memo):
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        out = float(e.value)
    elif isinstance(e, Sym):
        out = env[e.name]
    elif isinstance(e, Neg):
        out = -_eval_array(e.arg, env, memo)
    elif isinstance(e, Add):
        kids = e.children
        out = _eval_array(kids[0], env, memo)
        for t in kids[1:]:
            out = out + _eval_array(t, env, memo)
    elif isinstance(e, Sub):
        out = _eval_array(e.children[0], env, memo) - _eval_array(e.children[1], env, memo)
    elif isinstance(e, Mul):
        kids = e.children
        out = _eval_array(kids[0], env, memo)
        for t in kids[1:]:
            out = out * _eval_array(t, env, memo)
    elif isinstance(e, Div):
        out = _eval_array(e.num, env, memo) / _eval_array(e.den, env, memo)
    elif isinstance(e, Pow):
        base = _eval_array(e.base, env, memo)
        out = np.power(np.asarray(base, dtype=float), e.exponent) if e.exponent < 0 else base**e.exponent
    elif isinstance(e, Func):
        out = _ARRAY_FUNCS[e.name](_eval_array(e.arg, env, memo))
    else:
        raise TypeError(f"unknown node {type(e).__name__}")
    memo[e] = out
    return out


def evaluate_array(e: Expr, env: Mapping[str, np.ndarray], shape=None, check: bool = True) -> np.ndarray:
    """Vectorized evaluation over broadcastable arrays of coordinate values.

    With ``check`` (default) a non-finite result is traced back to the
    offending subexpression through :func:`evaluate` at the first bad index.
    """
    env = {name: np.asarray(v, dtype=float) for name, v in env.items()}
    if shape is None:
        shape = np.broadcast_shapes(*(v.shape for v in env.values())) if env else ()
    with np.errstate(all="ignore"):
        out = _eval_array(e, env, {})
        out = np.broadcast_to(np.asarray(out, dtype=float), shape)
    if check and not np.all(np.isfinite(out)):
        idx = np.unravel_index(int(np.argmin(np.isfinite(out))), shape) if shape else ()
        point = {name: float(np.broadcast_to(v, shape)[idx]) for name, v in env.items()}
        evaluate(e, point)  # raises with the precise subexpression
        raise SingularEvaluationError(e, "non-finite value")
    return out


def sample_points(names, box: Mapping[str, tuple[float, float]] | None, count: int, seed: int):
    """``count`` uniform points in the box, one row per point, columns in ``names`` order."""
    rng = np.random.default_rng(seed)
    lo = np.array([(box or {}).get(n, DEFAULT_BOX)[0] for n in names], dtype=float)
    hi = np.array([(box or {}).get(n, DEFAULT_BOX)[1] for n in names], dtype=float)
    return lo + rng.random((count, len(names))) * (hi - lo)


def is_zero(e: Expr, chart=None, *, box=None, eps=None, samples=None, seed=None, max_batches=None) -> Verdict:
    """Decide whether ``e`` vanishes on the sampling box.

    ``Zero`` when normalization gives the constant 0; otherwise the expression
    is evaluated at pseudo-random points (fixed seed) of the chart's safe box,
    skipping points where it is singular.
    """
    settings = chart.zero_test if chart is not None else None
    eps = eps if eps is not None else (settings.eps if settings else 1e-9)
    samples = samples if samples is not None else (settings.samples if settings else 16)
    seed = seed if seed is not None else (settings.seed if settings else default_seed())
    max_batches = max_batches if max_batches is not None else (settings.max_batches if settings else 64)
    if box is None and chart is not None:
        box = chart.safe_box

    ne = normalize(e)
    if ne.is_const(0):
        return Verdict.ZERO
    names = list(chart.all_names) if chart is not None else []
    names += sorted(ne.symbols - set(names))
    values = []
    batch_pts = sample_points(names, box, samples * max_batches, seed)
    for b in range(max_batches):
        pts = batch_pts[b * samples : (b + 1) * samples]
        env = {n: pts[:, j] for j, n in enumerate(names) if n in ne.symbols}
        vals = evaluate_array(ne, env, shape=(samples,), check=False)
        values.extend(vals[np.isfinite(vals)].tolist())
        if len(values) >= samples:
            break
    else:
        raise EvaluationDomainError(f"no singularity-free sample points for {ne}")
    if max(abs(v) for v in values[:samples]) > eps:
        return Verdict.NONZERO
    return Verdict.PROBABLY_ZERO


def default_seed() -> int:
    raw = os.environ.get("KSYM_SEED")
    return int(raw, 0) if raw else 0xC0FFEE
