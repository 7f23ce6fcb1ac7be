import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtc.expressions import (
    Add,
    Const,
    EvaluationError,
    ExpressionSyntaxError,
    Func,
    Mul,
    Neg,
    Pow,
    Sub,
    UnknownIdentifierError,
    Var,
    diff_expr,
    diff_matrix,
    eval_array,
    eval_expr,
    eval_matrix,
    matrix_from_rows,
    parse_expr,
    zero_matrix,
)


def test_single_variable():
    assert parse_expr("t2") == Var(2)


def test_polynomial_value():
    assert eval_expr(parse_expr("3*t2^2 + 1"), (17.0, 2.0)) == 13.0


def test_unbalanced_parenthesis_position():
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expr("t1*(")
    assert err.value.position == 4


@pytest.mark.parametrize("text", ["", "1 +", "t1 t2", "sin t1", "t1^1.5", "t1^t2", "2*)"])
def test_syntax_errors(text):
    with pytest.raises(ExpressionSyntaxError):
        parse_expr(text)


def test_unknown_identifiers():
    with pytest.raises(UnknownIdentifierError):
        parse_expr("x + 1")
    with pytest.raises(UnknownIdentifierError):
        parse_expr("t3", m=2)
    with pytest.raises(UnknownIdentifierError):
        parse_expr("tan(t1)")


@pytest.mark.parametrize("text,t,value", [
    ("t1+t2", (1, 2), 3.0),
    ("t2^2", (5, 3), 9.0),
    ("-t1^2", (3, 0), -9.0),
    ("2^-1", (0, 0), 0.5),
    ("t1^(-2)", (2, 0), 0.25),
    ("1 - 2 - 3", (0, 0), -4.0),
    ("8 / 4 / 2", (0, 0), 1.0),
    ("sqrt(t1) + exp(0) + cos(0) + sin(0)", (4, 0), 4.0),
    ("2.5e-1 * t2", (0, 4), 1.0),
])
def test_evaluation(text, t, value):
    assert eval_expr(parse_expr(text), t) == pytest.approx(value, abs=1e-15)


def test_division_by_zero_reports_point():
    with pytest.raises(EvaluationError) as err:
        eval_expr(parse_expr("1/t2"), (0.0, 0.0))
    assert err.value.t == (0.0, 0.0)


def test_sqrt_of_negative_is_an_error():
    with pytest.raises(EvaluationError):
        eval_expr(parse_expr("sqrt(t1)"), (-1.0, 0.0))


def test_non_strict_evaluation_gives_nan():
    vals = eval_array(parse_expr("1/t1"), np.array([[0.0], [2.0]]), strict=False)
    assert math.isnan(vals[0]) and vals[1] == 0.5


def test_power_rule():
    d = diff_expr(parse_expr("t2^2"), 2)
    two_t2 = parse_expr("2*t2")
    for t in [(0.0, -1.5), (1.0, 0.3), (2.0, 7.0)]:
        assert eval_expr(d, t) == pytest.approx(eval_expr(two_t2, t))


def test_derivative_of_unrelated_variable_is_zero():
    assert diff_expr(parse_expr("t2"), 1).is_zero()


def test_chain_rule_against_finite_difference():
    e = parse_expr("sin(t1*t2)")
    d = diff_expr(e, 1)
    t, h = np.array([0.3, 0.7]), 1e-5
    fd = (eval_expr(e, t + [h, 0]) - eval_expr(e, t - [h, 0])) / (2 * h)
    assert abs(eval_expr(d, t) - fd) < 1e-8
    assert eval_expr(d, t) == pytest.approx(0.7 * math.cos(0.21), abs=1e-15)


def test_matrix_evaluation():
    assert np.array_equal(eval_matrix(zero_matrix(2, 3), (1, 2)), np.zeros((2, 3)))
    N1 = matrix_from_rows([["t2", "0"], ["0", "t2"]], 2)
    assert np.array_equal(eval_matrix(N1, (0.0, 0.5)), np.diag([0.5, 0.5]))
    assert np.array_equal(eval_matrix(matrix_from_rows([["t1*t2"]], 2), (2, 3)), [[6.0]])


def test_matrix_error_names_entry():
    M = matrix_from_rows([["1", "1/t1"]], 1)
    with pytest.raises(EvaluationError) as err:
        eval_matrix(M, (0.0,))
    assert err.value.entry == (0, 1)


def test_matrix_derivative_entrywise():
    M = matrix_from_rows([["t1*t2", "t2^3"]], 2)
    assert np.allclose(eval_matrix(diff_matrix(M, 2), (2.0, 3.0)), [[2.0, 27.0]])


# Random expression trees for round-trip and derivative properties.
_leaves = st.one_of(
    st.builds(Var, st.integers(1, 2)),
    st.builds(Const, st.floats(-3, 3, allow_nan=False).map(lambda x: round(x, 3))),
)


def _extend(children):
    return st.one_of(
        st.builds(Add, children, children),
        st.builds(Sub, children, children),
        st.builds(Mul, children, children),
        st.builds(Neg, children),
        st.builds(Pow, children, st.integers(0, 3)),
        st.builds(Func, st.sampled_from(["sin", "cos"]), children),
    )


expressions = st.recursive(_leaves, _extend, max_leaves=8)
points = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


@settings(max_examples=200, deadline=None)
@given(expressions, points)
def test_print_parse_round_trip(e, t):
    back = parse_expr(str(e), 2)
    assert eval_expr(back, t) == pytest.approx(eval_expr(e, t), rel=1e-12, abs=1e-12)
    assert parse_expr(str(back), 2) == back


@settings(max_examples=150, deadline=None)
@given(expressions, points, st.integers(1, 2))
def test_derivative_matches_finite_difference(e, t, var):
    h = 1e-6
    step = np.zeros(2)
    step[var - 1] = h
    t = np.array(t)
    fd = (eval_expr(e, t + step) - eval_expr(e, t - step)) / (2 * h)
    exact = eval_expr(diff_expr(e, var), t)
    assert abs(exact - fd) <= 1e-5 * max(1.0, abs(exact))
