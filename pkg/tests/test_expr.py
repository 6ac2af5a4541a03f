import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pvhybrid import expr
from pvhybrid.errors import ArityError, InputShapeError, ParseError, SymbolError
from pvhybrid.expr import Constant, ExprTree, OpKind, Variable, op

SIN_TARGET = "(sin (+ (+ x0 3.14159265358979) (* 0.5 x1)))"

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


def nodes(dim):
    leaves = st.one_of(
        st.integers(0, dim - 1).map(Variable),
        st.floats(allow_nan=False, allow_infinity=False, width=64).map(Constant),
    )

    def extend(children):
        return st.one_of(
            st.tuples(st.sampled_from(expr.UNARY_OPS), children).map(lambda t: op(t[0], t[1])),
            st.tuples(st.sampled_from(expr.BINARY_OPS), children, children).map(lambda t: op(t[0], t[1], t[2])),
        )

    return st.recursive(leaves, extend, max_leaves=20)


trees = nodes(2).map(lambda n: ExprTree(n, 2))


def test_sin_target_value_at_origin():
    t = expr.parse_sexpr(SIN_TARGET, 2)
    assert abs(expr.evaluate(t, [0.0, 0.0])) < 1e-12


def test_sin_target_batch():
    t = expr.parse_sexpr(SIN_TARGET, 2)
    out = expr.evaluate_batch(t, np.array([[0.0, 0.0], [0.0, 2 * math.pi]]))
    assert np.all(np.abs(out) < 1e-12)


def test_sin_target_size_and_depth():
    # sin, +, +, x0, pi, *, 0.5, x1
    assert expr.size_and_depth(expr.parse_sexpr(SIN_TARGET, 2)) == (8, 3)


def test_small_counts():
    assert expr.size_and_depth(Constant(1.0)) == (1, 0)
    assert expr.size_and_depth(op(OpKind.ADD, Variable(0), Variable(1))) == (3, 1)


def test_constant_and_variable():
    assert expr.evaluate(ExprTree(Constant(3.5), 1), [9.0]) == 3.5
    assert expr.evaluate(ExprTree(Variable(1), 2), [4.0, -2.0]) == -2.0


def test_protected_ops():
    one, zero = Constant(1.0), Constant(0.0)
    assert expr.evaluate(ExprTree(op(OpKind.DIV, one, zero), 1), [0.0]) == 1.0
    assert expr.evaluate(ExprTree(op(OpKind.DIV, one, Constant(1e-7)), 1), [0.0]) == 1.0
    assert expr.evaluate(ExprTree(op(OpKind.LOG, zero), 1), [0.0]) == math.log(1e-6)
    assert expr.evaluate(ExprTree(op(OpKind.LOG, Constant(-math.e)), 1), [0.0]) == pytest.approx(1.0)
    assert expr.evaluate(ExprTree(op(OpKind.SQRT, Constant(-4.0)), 1), [0.0]) == 2.0


def test_overflow_is_bounded():
    big = Constant(1e300)
    t = ExprTree(op(OpKind.MUL, big, big), 1)
    v = expr.evaluate(t, [0.0])
    assert math.isfinite(v) and abs(v) <= expr.VALUE_BOUND


def test_empty_batch():
    t = expr.parse_sexpr(SIN_TARGET, 2)
    assert expr.evaluate_batch(t, np.empty((0, 2))).shape == (0,)


def test_batch_shape_error():
    t = expr.parse_sexpr(SIN_TARGET, 2)
    with pytest.raises(InputShapeError):
        expr.evaluate_batch(t, np.zeros((3, 3)))
    with pytest.raises(InputShapeError):
        expr.evaluate(t, [1.0])


def test_variable_out_of_range():
    with pytest.raises(ValueError):
        ExprTree(Variable(2), 2)


def test_arity_enforced():
    with pytest.raises(ArityError):
        expr.parse_sexpr("(+ x0)", 1)
    with pytest.raises(ValueError):
        op(OpKind.SIN, Variable(0), Variable(0))


def test_parse_errors_carry_offsets():
    with pytest.raises(SymbolError) as e:
        expr.parse_sexpr("(+ x0 (tan x0))", 1)
    assert e.value.offset == 7
    with pytest.raises(ParseError):
        expr.parse_sexpr("(+ x0 x0", 1)
    with pytest.raises(ParseError):
        expr.parse_sexpr("x0 x0", 1)
    with pytest.raises(ParseError):
        expr.parse_sexpr("", 1)


def test_parse_simple():
    assert expr.parse_sexpr("x0", 1).root == Variable(0)
    assert expr.parse_sexpr("  (neg  -2.5 )\n", 1).root == op(OpKind.NEG, Constant(-2.5))


def test_random_batch_matches_scalar(rng):
    t = expr.parse_sexpr("(+ (/ x0 x1) (log (sqrt (* x0 (cos x1)))))", 2)
    X = rng.normal(size=(10, 2))
    batch = expr.evaluate_batch(t, X)
    for i in range(10):
        assert batch[i] == expr.evaluate(t, X[i])


def test_replace_subtree():
    t = expr.parse_sexpr("(+ x0 (* x0 x0))", 1).root
    new = expr.replace_subtree(t, 2, Constant(2.0))
    assert expr.print_sexpr(new) == "(+ x0 2.0)"
    assert expr.print_sexpr(t) == "(+ x0 (* x0 x0))"


@given(trees)
def test_print_parse_round_trip(t):
    assert expr.parse_sexpr(expr.print_sexpr(t), 2) == t


@given(trees, finite, finite)
def test_total_and_deterministic(t, a, b):
    v1 = expr.evaluate(t, [a, b])
    v2 = expr.evaluate(t, [a, b])
    assert math.isfinite(v1)
    assert v1 == v2


@given(trees, st.lists(st.tuples(finite, finite), min_size=1, max_size=6))
def test_batch_equals_scalar(t, rows):
    X = np.array(rows, dtype=float)
    batch = expr.evaluate_batch(t, X)
    assert [expr.evaluate(t, r) for r in X] == list(batch)


@given(trees)
def test_size_depth_consistent(t):
    size, d = expr.size_and_depth(t)
    assert size == len(list(expr.iter_nodes(t.root)))
    assert 0 <= d < size
