"""Symbolic scalar expressions over chart coordinates and base parameters."""
from .evaluate import (
    DEFAULT_BOX,
    EvaluationDomainError,
    SingularEvaluationError,
    Verdict,
    combine,
    default_seed,
    evaluate,
    evaluate_array,
    is_zero,
    sample_points,
)
from .nodes import (
    FUNCTIONS,
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
    as_expr,
    func,
    sym,
)
from .normal import coefficients_in, differentiate, is_polynomial_in, normalize, substitute
from .parser import ParseError, UnknownIdentifierError, parse
from .printer import to_text

__all__ = [
    "Add", "Const", "DEFAULT_BOX", "Div", "EvaluationDomainError", "Expr", "FUNCTIONS", "Func",
    "Mul", "Neg", "ONE", "ParseError", "Pow", "SingularEvaluationError", "Sub", "Sym",
    "UnknownIdentifierError", "Verdict", "ZERO", "as_expr", "coefficients_in", "combine",
    "default_seed", "differentiate", "evaluate", "evaluate_array", "func", "is_polynomial_in",
    "is_zero", "normalize", "parse", "sample_points", "substitute", "sym", "to_text",
]
