import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowcomplete.expr import (
    BinOp,
    Call,
    EvaluationError,
    Neg,
    Num,
    ParseError,
    Var,
    evaluate,
    evaluate_predicate,
    parse_expression,
    parse_predicate,
    predicate_to_source,
    to_source,
    variables_used,
)


def ev(src, point, t=0.0):
    return evaluate(parse_expression(src), point, t)


class TestParseAndEvaluate:
    def test_linear_arithmetic(self):
        assert ev("x1 + 2*x2", (1.0, 3.0)) == 7.0

    def test_power(self):
        assert ev("x1^2", (-2.0,)) == 4.0

    def test_closed_form_flow_value(self):
        # time-t flow of the quadratic field, checked by hand substitution:
        # x/(1 - t x) at x=1, t=0.5 gives 2
        assert ev("x1/(1 - t*x1)", (1.0,), t=0.5) == pytest.approx(2.0, abs=1e-15)

    def test_power_right_associative(self):
        assert ev("2^3^2", ()) == 512.0

    def test_unary_minus_binds_below_power(self):
        assert ev("-x1^2", (2.0,)) == -4.0

    def test_precedence_and_parens(self):
        assert ev("(x1 + 2)*x2", (1.0, 4.0)) == 12.0
        assert ev("x1 - x2 - 1", (10.0, 3.0)) == 6.0

    def test_functions(self):
        assert ev("sin(x1)", (0.0,)) == 0.0
        assert ev("exp(x1)", (1.0,)) == pytest.approx(math.e, abs=1e-12)
        assert ev("atan2(x2, x1)", (1.0, 1.0)) == pytest.approx(math.pi / 4)
        assert ev("min(x1, x2)", (3.0, -1.0)) == -1.0
        assert ev("max(0, abs(x1) - 1)", (-0.5,)) == 0.0

    def test_scientific_literals(self):
        assert ev("1.5e-3", ()) == 1.5e-3


class TestEvaluationErrors:
    def test_division_by_zero(self):
        with pytest.raises(EvaluationError):
            ev("1/x1", (0.0,))

    def test_log_of_nonpositive(self):
        with pytest.raises(EvaluationError):
            ev("log(x1)", (0.0,))

    def test_sqrt_of_negative(self):
        with pytest.raises(EvaluationError):
            ev("sqrt(x1)", (-1.0,))

    def test_overflow_is_an_error_not_inf(self):
        with pytest.raises(EvaluationError):
            ev("exp(x1)", (1e6,))

    def test_undefined_variable(self):
        with pytest.raises(EvaluationError):
            ev("x3", (1.0, 2.0))


class TestParseErrors:
    def test_position_reported(self):
        with pytest.raises(ParseError) as err:
            parse_expression("x1 + ")
        assert err.value.line == 1 and err.value.column == 6

    def test_unknown_identifier(self):
        with pytest.raises(ParseError, match="unknown identifier"):
            parse_expression("foo + 1")

    def test_wrong_arity(self):
        with pytest.raises(ParseError, match="argument"):
            parse_expression("sin(1, 2)")
        with pytest.raises(ParseError, match="argument"):
            parse_expression("atan2(1)")

    def test_unbalanced_parens(self):
        with pytest.raises(ParseError):
            parse_expression("(x1 + 2")

    def test_equality_rejected_with_hint(self):
        with pytest.raises(ParseError, match="open"):
            parse_predicate("x1 == 0")


class TestPredicates:
    def test_punctured_plane_membership(self):
        inside = parse_predicate("x1^2 + x2^2 > 0")
        assert evaluate_predicate(inside, (0.0, 0.0)) is False
        assert evaluate_predicate(inside, (1.0, 0.0)) is True

    def test_excluded_segment(self):
        # complement of the segment {0} x [-1, 1], via strict relops
        inside = parse_predicate("x1 != 0 or x2 < -1 or x2 > 1")
        assert evaluate_predicate(inside, (0.0, 0.5)) is False
        assert evaluate_predicate(inside, (0.0, 1.5)) is True
        assert evaluate_predicate(inside, (2.0, 0.0)) is True

    def test_boolean_combinations(self):
        p = parse_predicate("not (x1 > 0 and x2 > 0)")
        assert evaluate_predicate(p, (1.0, -1.0)) is True
        assert evaluate_predicate(p, (1.0, 1.0)) is False

    def test_strict_semantics_error_propagates(self):
        # no short-circuit may swallow a singular sub-expression
        p = parse_predicate("x1 > -1 or 1/x1 > 0")
        with pytest.raises(EvaluationError):
            evaluate_predicate(p, (0.0,))


# -- round-trip stability -----------------------------------------------------

_CORPUS = [
    "x1 + 2*x2",
    "x1/(1 - t*x1)",
    "-x2",
    "x1*cos(t) - x2*sin(t)",
    "sqrt(x1^2 + max(0, abs(x2) - 1)^2)",
    "x1 / (1 - t*x1)",
    "2^3^2",
    "-(x1 + x2)^2",
    "x1 - (x2 - 1)",
    "x1 / x2 / 2",
]


@pytest.mark.parametrize("src", _CORPUS)
def test_roundtrip_on_corpus(src):
    tree = parse_expression(src)
    assert parse_expression(to_source(tree)) == tree


_PRED_CORPUS = [
    "x1^2 + x2^2 > 0",
    "x1 != 0 or x2 < -1 or x2 > 1",
    "not (x1 > 0 and x2 <= 1)",
    "0 < 1",
]


@pytest.mark.parametrize("src", _PRED_CORPUS)
def test_predicate_roundtrip_on_corpus(src):
    tree = parse_predicate(src)
    assert parse_predicate(predicate_to_source(tree)) == tree


def _expressions(max_depth=4):
    leaves = st.one_of(
        st.floats(min_value=0.0, max_value=100.0, allow_nan=False).map(Num),
        st.sampled_from([Var("x1"), Var("x2"), Var("t")]),
    )

    def extend(children):
        return st.one_of(
            st.tuples(st.sampled_from("+-*/^"), children, children).map(
                lambda t: BinOp(*t)),
            children.map(Neg),
            st.tuples(st.sampled_from(["sin", "cos", "exp", "abs"]), children).map(
                lambda t: Call(t[0], (t[1],))),
            st.tuples(st.sampled_from(["atan2", "min", "max"]), children, children).map(
                lambda t: Call(t[0], (t[1], t[2]))),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@given(_expressions())
@settings(max_examples=200, deadline=None)
def test_roundtrip_random_trees(tree):
    assert parse_expression(to_source(tree)) == tree


@given(_expressions(), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=100, deadline=None)
def test_evaluation_is_deterministic(tree, a, b, t):
    try:
        first = evaluate(tree, (a, b), t)
    except EvaluationError:
        with pytest.raises(EvaluationError):
            evaluate(tree, (a, b), t)
        return
    assert math.isfinite(first)
    # bit-for-bit repeatability
    assert evaluate(tree, (a, b), t) == first


def test_variables_used():
    assert variables_used(parse_expression("x1 + x3*t")) == {"x1", "x3", "t"}
    assert variables_used(parse_predicate("x2 > 0 and x1 < 1")) == {"x1", "x2"}
