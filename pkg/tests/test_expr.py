import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from pznn.expr import (
    BinOp,
    Const,
    ExprSyntaxError,
    Func,
    Neg,
    Plant,
    Pow,
    Var,
    compile_expr,
    diff,
    evaluate,
    interval_eval,
    parse_expr,
    to_str,
    variables,
)
from pznn.interval import Interval

X1, X2 = Var("x", 0), Var("x", 1)
BOX = Interval([-1.0, -1.0], [1.0, 1.0])


def ev(text, x, dims=(2, 0, 0)):
    return float(evaluate(parse_expr(text, dims), x))


def test_parse_eval_examples():
    assert ev("x1 + 2*x2", [1.0, 3.0]) == 7.0
    assert ev("-x1^2", [3.0, 0.0]) == -9.0
    assert ev("(x1 - x2) / 4", [3.0, 1.0]) == 0.5
    assert ev("sin(x1)^2 + cos(x1)^2", [0.7, 0.0]) == pytest.approx(1.0, abs=1e-15)
    assert ev("sigmoid(0)", [0, 0]) == 0.5
    assert ev("1.5e1 - .5", [0, 0]) == 14.5
    assert float(evaluate(parse_expr("u1 * w1", (1, 1, 1)), [0.0], [2.0], [3.0])) == 6.0


def test_precedence():
    assert ev("1 - 2 - 3", [0, 0]) == -4
    assert ev("8 / 4 / 2", [0, 0]) == 1
    assert ev("2 * 3 + 4", [0, 0]) == 10
    assert ev("-2^2", [0, 0]) == -4
    assert ev("(-2)^2", [0, 0]) == 4


@pytest.mark.parametrize("text,pos", [("x1 +", 5), ("x3", 1), ("foo(x1)", 1), ("x1 ^ 1.5", 6),
                                      ("(x1", 4), ("x1 x2", 4), ("x1 $ 2", 4)])
def test_syntax_errors(text, pos):
    # positions are 1-based character offsets
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr(text, (2, 0, 0))
    assert info.value.pos == pos


def test_runtime_domain_errors():
    with pytest.raises(ZeroDivisionError):
        evaluate(parse_expr("1 / x1"), [0.0])
    with pytest.raises(ValueError):
        evaluate(parse_expr("sqrt(x1)"), [-1.0])
    with pytest.raises(ZeroDivisionError):
        interval_eval(parse_expr("1 / x1"), Interval([-1.0], [1.0]))
    with pytest.raises(ValueError):
        interval_eval(parse_expr("sqrt(x1)"), Interval([-1.0], [1.0]))
    with pytest.raises(ValueError):
        interval_eval(parse_expr("x1"))


def test_diff_examples():
    d = diff(parse_expr("sin(x1) * x2", (2, 0, 0)), X1)
    assert float(evaluate(d, [0.0, 5.0])) == 5.0
    assert diff(parse_expr("x1^3"), X1) == BinOp("*", Const(3.0), Pow(X1, 2))
    assert diff(parse_expr("x2", (2, 0, 0)), X1) == Const(0.0)
    assert diff(parse_expr("x1^0"), X1) == Const(0.0)
    d = diff(parse_expr("x1 / x2", (2, 0, 0)), X2)
    assert float(evaluate(d, [2.0, 4.0])) == pytest.approx(-2.0 / 16)


def test_interval_eval_examples():
    assert interval_eval(parse_expr("x1^2"), Interval([-1.0], [2.0])) == interval_eval(
        Pow(X1, 2), Interval([-1.0], [2.0]))
    r = interval_eval(parse_expr("x1^2"), Interval([-1.0], [2.0]))
    assert (r.lo, r.hi) == (0.0, 4.0)
    r = interval_eval(parse_expr("x1 - x1"), Interval([-1.0], [1.0]))
    assert (r.lo, r.hi) == (-2.0, 2.0)  # no dependency tracking
    r = interval_eval(parse_expr("x1 * x2", (2, 0, 0)), BOX)
    assert (r.lo, r.hi) == (-1.0, 1.0)


def test_variables_and_compile():
    e = parse_expr("x1 * u1 + tanh(w2)", (1, 1, 2))
    assert variables(e) == {X1, Var("u", 0), Var("w", 1)}
    f = compile_expr(e)
    assert f(np.array([2.0]), np.array([3.0]), np.array([0.0, 0.0])) == 6.0


def test_plant():
    p = Plant(["x2", "-sin(x1) + u1"], m=1)
    out = p(np.array([[0.0, np.pi / 2], [1.0, 2.0]]), np.array([[0.5, 0.5]]))
    assert out.shape == (2, 2) and np.allclose(out, [[1.0, 2.0], [0.5, -0.5]])
    assert not p.is_linear()
    J = p.jacobian([0.0, 0.0], [0.0])
    assert np.allclose(J, [[0, 1, 0], [-1, 0, 1]])
    lin = Plant.linear([[0, 1], [0, 0]], [[0], [1]])
    assert lin.is_linear() and (lin.n, lin.m, lin.r) == (2, 1, 0)
    assert np.allclose(lin(np.array([1.0, 2.0]), np.array([3.0])), [2.0, 3.0])
    with pytest.raises(ValueError):
        Plant(["x1"], n=2)


# ---------------------------------------------------------------------------
# random expressions

leaf = st.one_of(st.sampled_from([X1, X2]), st.floats(-2, 2).map(lambda v: Const(round(v, 3))))


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*"), children, children).map(lambda t: BinOp(*t)),
        children.map(Neg),
        st.tuples(children, st.integers(0, 3)).map(lambda t: Pow(*t)),
        st.tuples(st.sampled_from(["sin", "cos", "tanh", "sigmoid"]), children).map(lambda t: Func(*t)),
        # positive denominators and radicands keep the domain safe
        st.tuples(children, children).map(lambda t: BinOp("/", t[0], BinOp("+", Const(2.0), Pow(t[1], 2)))),
        children.map(lambda c: Func("sqrt", BinOp("+", Const(1.0), Pow(c, 2)))),
        children.map(lambda c: Func("exp", Func("tanh", c))),
    )


exprs = st.recursive(leaf, _extend, max_leaves=12)


def depth(e):
    if isinstance(e, (Const, Var)):
        return 0
    if isinstance(e, BinOp):
        return 1 + max(depth(e.left), depth(e.right))
    return 1 + depth(e.arg if hasattr(e, "arg") else e.base)


points = st.tuples(st.floats(-1, 1), st.floats(-1, 1))


@given(exprs, points, st.sampled_from([X1, X2]))
def test_diff_matches_finite_differences(e, x, v):
    assume(depth(e) <= 6)
    h = 1e-6
    x = np.array(x)
    step = np.zeros(2)
    step[v.index] = h
    fd = (float(evaluate(e, x + step)) - float(evaluate(e, x - step))) / (2 * h)
    d = float(evaluate(diff(e, v), x))
    assume(abs(d) < 1e4)
    assert abs(fd - d) <= 1e-5 * max(1.0, abs(d), abs(float(evaluate(e, x))))


@given(exprs, st.integers(0, 2 ** 31))
def test_interval_eval_contains_samples(e, seed):
    assume(depth(e) <= 6)
    r = interval_eval(e, BOX)
    pts = np.random.default_rng(seed).uniform(-1, 1, (2, 1000))
    vals = np.broadcast_to(np.asarray(evaluate(e, pts), dtype=float), (1000,))
    assert np.all(vals >= r.lo - 1e-12 * (1 + abs(r.lo)))
    assert np.all(vals <= r.hi + 1e-12 * (1 + abs(r.hi)))


@given(exprs, points)
def test_print_parse_round_trip(e, x):
    s = to_str(e)
    back = parse_expr(s, (2, 0, 0))
    assert to_str(back) == s
    a, b = float(evaluate(e, np.array(x))), float(evaluate(back, np.array(x)))
    assert a == b or (math.isnan(a) and math.isnan(b))
