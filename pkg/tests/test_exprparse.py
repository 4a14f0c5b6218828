import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from asymdiag import exprparse as ep
from asymdiag.errors import DomainError, ExprSyntaxError, UnknownIdentifierError


def value(text, t):
    return ep.eval(ep.parse(text), t)


def test_parse_examples():
    assert ep.parse("1") == ep.Num(1.0)
    assert value("1+t*2", 3.0) == 7
    assert value("sin(2*3.141592653589793*t)", 0.25) == pytest.approx(1.0, abs=1e-12)


def test_precedence_and_associativity():
    assert value("2^3^2", 0) == 2**9
    assert value("-t^2", 3.0) == -9
    assert value("8/4/2", 0) == 1
    assert value("1-2-3", 0) == -4
    assert value("2*-t", 2.0) == -4
    assert value("t^-2", 2.0) == 0.25
    assert value("(1, 2)*(1, -2)", 0) == 5
    assert value("3 − t", 1.0) == 2  # unicode minus


def test_functions():
    t = np.linspace(0.1, 1, 7)
    assert np.allclose(value("exp(ln(t))", t), t)
    assert np.allclose(value("sqrt(t)^2", t), t)
    assert np.allclose(value("cos(t)^2 + sin(t)^2", t), 1)


def test_eval_deriv_examples(rng):
    assert ep.eval_deriv(ep.parse("t^2"), 0.5) == pytest.approx(1.0)
    e = ep.parse("exp(t)")
    ts = rng.uniform(0, 1, 5)
    assert np.allclose(ep.eval_deriv(e, ts), ep.eval(e, ts), rtol=1e-14)


def test_derivative_text():
    assert ep.to_text(ep.derivative(ep.parse("t"))) == "1.0"
    assert ep.to_text(ep.derivative(ep.parse("3"))) == "0.0"
    assert ep.to_text(ep.derivative(ep.parse("-t"))) == "(-1.0)"


@pytest.mark.parametrize(
    "text, offset",
    [("1 +", 3), ("1 + * 2", 4), ("(1, 2", 5), ("sin 1", 4), ("t^1.5", 2), ("t $ 1", 2), ("", 0), ("2 3", 2)],
)
def test_syntax_errors_report_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        ep.parse(text)
    assert info.value.offset == offset
    assert info.value.record()["offset"] == offset


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as info:
        ep.parse("1 + tan(t)")
    assert info.value.offset == 4


def test_offset_counts_bytes():
    with pytest.raises(ExprSyntaxError) as info:
        ep.parse("t − $")
    assert info.value.offset == len("t − ".encode())


def test_length_limit():
    with pytest.raises(ExprSyntaxError):
        ep.parse("1+" * 40_000 + "1")


def test_domain_errors():
    with pytest.raises(DomainError):
        value("ln(t - 1)", np.linspace(0, 1, 5))
    with pytest.raises(DomainError):
        value("sqrt(t - 2)", 0.5)
    with pytest.raises(DomainError):
        value("1/t", np.linspace(0, 1, 5))
    # complex arguments are fine: only real nonpositive values are rejected
    assert value("sqrt((-1, 1e-300))", 0.0) == pytest.approx(1j)


# --- random expressions -----------------------------------------------------

literals = st.floats(0.1, 3.0).map(lambda x: f"{x:.3f}")
leaves = st.one_of(st.just("t"), literals)


def _extend(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*"), children).map(lambda p: f"({p[0]} {p[1]} {p[2]})"),
        st.tuples(children, st.integers(0, 3)).map(lambda p: f"({p[0]})^{p[1]}"),
        st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda p: f"{p[0]}({p[1]})"),
        children.map(lambda c: f"exp(0.3*{c})"),
        children.map(lambda c: f"ln(2 + sin({c}))"),
        children.map(lambda c: f"sqrt(2 + cos({c}))"),
        children.map(lambda c: f"-{c}"),
        children.map(lambda c: f"1/(2 + sin({c}))"),
        st.tuples(children, children).map(lambda p: f"({p[0]}, {p[1]})"),
    )


exprs = st.recursive(leaves, _extend, max_leaves=8)
grid = np.linspace(0.05, 0.95, 11)


def _finite(e):
    v = ep.eval(e, grid)
    return np.all(np.isfinite(v)) and np.max(np.abs(v)) < 1e6


@given(exprs)
def test_round_trip(text):
    e = ep.parse(text)
    printed = ep.to_text(e)
    assert ep.parse(printed) == e
    assert ep.to_text(ep.parse(printed)) == printed


@given(exprs)
def test_derivative_matches_finite_differences(text):
    e = ep.parse(text)
    assume(_finite(e))
    h = 1e-5
    fd = (ep.eval(e, grid + h) - ep.eval(e, grid - h)) / (2 * h)
    d = ep.eval_deriv(e, grid)
    assume(np.max(np.abs(d)) < 1e4)
    assert np.allclose(d, fd, atol=1e-6 * (1 + np.max(np.abs(d))), rtol=1e-6)


@given(exprs, exprs, st.floats(-2, 2))
def test_derivative_linearity_and_product_rule(a, b, c):
    ea, eb = ep.parse(a), ep.parse(b)
    assume(_finite(ea) and _finite(eb))
    da, db = ep.eval_deriv(ea, grid), ep.eval_deriv(eb, grid)
    lin = ep.eval_deriv(ep.BinOp("+", ep.BinOp("*", ep.Num(c), ea), eb), grid)
    assert np.allclose(lin, c * da + db, rtol=1e-9, atol=1e-9)
    prod = ep.eval_deriv(ep.BinOp("*", ea, eb), grid)
    expected = da * ep.eval(eb, grid) + ep.eval(ea, grid) * db
    assert np.allclose(prod, expected, rtol=1e-9, atol=1e-9 * (1 + np.max(np.abs(expected))))
