import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ksym.chart import Chart
from ksym.expr import (
    Add,
    Const,
    Div,
    Func,
    Mul,
    Neg,
    ParseError,
    Pow,
    SingularEvaluationError,
    Sub,
    Sym,
    UnknownIdentifierError,
    Verdict,
    differentiate,
    evaluate,
    func,
    is_zero,
    normalize,
    parse,
    substitute,
    to_text,
)
from ksym.expr.evaluate import default_seed

C11 = Chart(1, 1)
C12 = Chart(1, 2)
q, p, p2 = Sym("q_1"), Sym("p_1_1"), Sym("p_2_1")


def N(text, chart=C12):
    return normalize(parse(text, chart))


# parse ----------------------------------------------------------------------

def test_parse_sum_of_squares_over_two():
    got = parse("(p_1_1^2 + p_2_1^2)/2", C12)
    assert got == Div(Add(Pow(p, 2), Pow(p2, 2)), Const(2))


def test_parse_product():
    assert parse("q_1*p_1_1", C11) == Mul(q, p)


def test_parse_unknown_identifier_names_symbol():
    with pytest.raises(UnknownIdentifierError) as exc:
        parse("sin(q_2)", C11)
    assert exc.value.name == "q_2"
    assert exc.value.offset == 4


@pytest.mark.parametrize(
    "text, expected",
    [
        ("-q_1^2", Neg(Pow(q, 2))),
        ("q_1 - p_1_1 - 1", Sub(Sub(q, p), Const(1))),
        ("q_1/p_1_1/2", Div(Div(q, p), Const(2))),
        ("2*q_1 + 3", Add(Mul(Const(2), q), Const(3))),
        ("0.25", Const(Fraction(1, 4))),
        ("1e-2*q_1", Mul(Const(Fraction(1, 100)), q)),
        ("  sqrt( q_1 )", Func("sqrt", q)),
        ("q_1^(-2)", Pow(q, -2)),
    ],
)
def test_parse_precedence_and_literals(text, expected):
    assert parse(text, C12) == expected


@pytest.mark.parametrize(
    "text, offset",
    [
        ("q_1 +", 5),
        ("(q_1", 4),
        ("q_1 $ 2", 4),
        ("q_1^1.5", 4),
        ("foo(q_1)", 0),
        ("q_1)", 3),
        ("", 0),
    ],
)
def test_parse_syntax_errors_carry_byte_offset(text, offset):
    with pytest.raises(ParseError) as exc:
        parse(text, C12)
    assert exc.value.offset == offset


def test_parse_offset_counts_utf8_bytes():
    with pytest.raises(ParseError) as exc:
        parse("q_1 + é", C12)
    assert exc.value.offset == len("q_1 + ".encode())


def test_parse_rejects_out_of_range_and_zero_indices():
    for bad in ("p_3_1", "q_0", "t_3", "p_1_2", "q_01"):
        with pytest.raises(ParseError):
            parse(bad, C12)


def test_parse_params_can_be_disallowed():
    assert parse("t_1*t_2", C12) == Mul(Sym("t_1"), Sym("t_2"))
    with pytest.raises(UnknownIdentifierError):
        parse("t_1", C12, allow_params=False)


def test_printer_round_trips():
    for text in ["(p_1_1^2 + p_2_1^2)/2", "-q_1^2", "q_1 - (p_1_1 - 1)", "sin(q_1)^2*(1/2)", "q_1^(-3)",
                 "(q_1 + 1)/(q_1 - 1)"]:
        e = parse(text, C12)
        assert parse(to_text(e), C12) == e


# differentiate --------------------------------------------------------------

def test_differentiate_examples():
    assert differentiate(N("q_1^2"), "q_1") == N("2*q_1")
    assert differentiate(N("(p_1_1^2+p_2_1^2)/2"), "p_1_1") == p
    assert differentiate(N("p_1_1/q_1"), "q_1") == N("-p_1_1/q_1^2")


def test_differentiate_functions():
    assert differentiate(N("sin(q_1^2)"), "q_1") == N("2*q_1*cos(q_1^2)")
    assert differentiate(N("log(q_1)"), "q_1") == N("1/q_1")
    assert is_zero(differentiate(N("sqrt(q_1)"), "q_1") - N("1/(2*sqrt(q_1))"), C12).vanishes
    assert differentiate(N("exp(p_1_1)"), "q_1") == Const(0)


# normalize ------------------------------------------------------------------

def test_normalize_examples():
    assert N("(q_1+p_1_1)^2 - q_1^2 - 2*q_1*p_1_1 - p_1_1^2") == Const(0)
    assert N("q_1*(1/q_1)") == Const(1)
    assert N("sin(q_1)+0") == Func("sin", q)


def test_normalize_cancels_common_factors():
    assert N("(q_1^2 - 1)/(q_1 - 1)") == N("q_1 + 1")
    assert N("(q_1*p_1_1 + q_1)/(2*q_1)") == N("(p_1_1 + 1)/2")


def test_normalize_folds_trivial_functions():
    assert N("sin(q_1 - q_1) + cos(0) + log(1) + exp(0) + sqrt(4)") == Const(4)


def test_normalize_division_by_zero_raises():
    with pytest.raises(ZeroDivisionError):
        N("q_1/(q_1 - q_1)")


def test_substitute():
    assert normalize(substitute(N("q_1*p_1_1"), {"q_1": N("2*p_2_1")})) == N("2*p_2_1*p_1_1")


# is_zero --------------------------------------------------------------------

def test_is_zero_examples():
    assert is_zero(N("(q_1+p_1_1)^2-q_1^2-2*q_1*p_1_1-p_1_1^2"), C12) is Verdict.ZERO
    assert is_zero(N("sin(q_1)^2 + cos(q_1)^2 - 1"), C12) is Verdict.PROBABLY_ZERO
    assert is_zero(q, C12) is Verdict.NONZERO


def test_is_zero_skips_singular_points():
    chart = Chart(1, 1, box={"q_1": (-1.0, 1.0)})
    assert is_zero(N("log(q_1) - log(q_1) + sqrt(q_1)^2 - q_1", chart), chart) is Verdict.PROBABLY_ZERO


def test_seed_env_override(monkeypatch):
    monkeypatch.delenv("KSYM_SEED", raising=False)
    assert default_seed() == 0xC0FFEE
    monkeypatch.setenv("KSYM_SEED", "0x2A")
    assert default_seed() == 42


# evaluate -------------------------------------------------------------------

def test_evaluate_examples():
    assert evaluate(N("q_1^2"), {"q_1": 3.0}) == 9.0
    assert evaluate(N("p_1_1/q_1"), {"q_1": 2.0, "p_1_1": 1.0}) == 0.5


@pytest.mark.parametrize("text, point", [("1/q_1", {"q_1": 0.0}), ("log(q_1)", {"q_1": -1.0}),
                                         ("sqrt(q_1)", {"q_1": -2.0})])
def test_evaluate_singular(text, point):
    with pytest.raises(SingularEvaluationError) as exc:
        evaluate(parse(text, C11), point)
    assert exc.value.subexpr is not None


# properties -----------------------------------------------------------------

NAMES = ["q_1", "p_1_1", "p_2_1"]


def trees(depth: int):
    leaf = st.one_of(
        st.sampled_from(NAMES).map(Sym),
        st.fractions(min_value=-5, max_value=5, max_denominator=4).map(Const),
    )
    if depth == 0:
        return leaf
    sub = trees(depth - 1)
    return st.one_of(
        leaf,
        st.builds(Add, sub, sub),
        st.builds(Sub, sub, sub),
        st.builds(Mul, sub, sub),
        st.builds(Neg, sub),
        st.builds(Pow, sub, st.integers(0, 3)),
        st.builds(lambda a: func("sin", a), sub),
        st.builds(lambda a, b: Div(a, Add(Mul(b, b), Const(1))), sub, sub),
    )


@settings(max_examples=60, deadline=None)
@given(trees(8))
def test_normalize_is_idempotent(e):
    n = normalize(e)
    assert normalize(n) == n


@settings(max_examples=60, deadline=None)
@given(trees(3), trees(3), st.sampled_from(NAMES))
def test_product_rule(a, b, v):
    lhs = differentiate(Mul(a, b), v)
    rhs = Add(Mul(differentiate(a, v), b), Mul(a, differentiate(b, v)))
    assert is_zero(normalize(Sub(lhs, rhs)), C12).vanishes


@settings(max_examples=60, deadline=None)
@given(trees(3), trees(3), st.sampled_from(NAMES), st.fractions(-3, 3, max_denominator=3))
def test_differentiate_is_linear(a, b, v, c):
    lhs = differentiate(Add(a, Mul(Const(c), b)), v)
    rhs = Add(differentiate(a, v), Mul(Const(c), differentiate(b, v)))
    assert is_zero(normalize(Sub(lhs, rhs)), C12).vanishes


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.fractions(-9, 9, max_denominator=7), min_size=1, max_size=8),
    st.floats(-2.0, 2.0, allow_nan=False),
)
def test_evaluate_parse_matches_horner(coeffs, x):
    text = " + ".join(f"({c.numerator}/{c.denominator})*q_1^{j}" for j, c in enumerate(coeffs))
    got = evaluate(parse(text, C11), {"q_1": x})
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + float(c)
    scale = sum(abs(float(c)) * abs(x) ** j for j, c in enumerate(coeffs))
    assert abs(got - acc) <= 1e-12 * max(scale, 1e-300) + 1e-300


@settings(max_examples=60, deadline=None)
@given(trees(4))
def test_is_zero_never_claims_zero_for_large_values(e):
    v = is_zero(e, C12)
    if v is Verdict.ZERO:
        for pt in ({"q_1": 0.7, "p_1_1": 1.1, "p_2_1": 1.3}, {"q_1": 1.4, "p_1_1": 0.6, "p_2_1": 0.9}):
            try:
                assert abs(evaluate(e, pt)) <= 1e-9
            except (SingularEvaluationError, OverflowError):
                pass
    if v is Verdict.NONZERO:
        assert normalize(e) != Const(0)


def test_constants_are_exact():
    assert N("1/3 + 1/6") == Const(Fraction(1, 2))
    assert N("0.1 + 0.2") == Const(Fraction(3, 10))
    assert math.isclose(evaluate(N("1/3"), {}), 1 / 3)


def test_expressions_are_immutable():
    with pytest.raises(AttributeError):
        q.name = "p_1_1"


def test_is_zero_domain_error_when_no_point_is_regular():
    from ksym.expr import EvaluationDomainError

    chart = Chart(1, 1, box={"q_1": (-2.0, -1.0)})
    with pytest.raises(EvaluationDomainError):
        is_zero(N("log(q_1)", chart), chart)
