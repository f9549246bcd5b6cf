from __future__ import annotations

import math

import pytest

from errors import ConfigError
from expr import EvalError, ParseError, evaluate, free_variables, parse_expr, to_source

EXAMPLE = "piecewise(x2 <= 2, 0, pow(x2-2,2)*sin(x2-2))"


def _eval(src, **env):
    return evaluate(parse_expr(src), env)


@pytest.mark.parametrize("src, expected", [
    ("1+2*3", 7.0),
    ("2^3^2", 512.0),
    ("(1+2)*3", 9.0),
    ("-2^2", -4.0),
    ("-2*3", -6.0),
    ("10-4-3", 3.0),
    ("8/4/2", 1.0),
    ("1.5e1 + .5", 15.5),
    ("abs(-3) + exp(0) + ln(1)", 4.0),
    ("3 > 2", 1.0),
    ("3 ≥ 4", 0.0),
])
def test_arithmetic(src, expected):
    assert _eval(src) == expected


def test_piecewise_block():
    assert _eval(EXAMPLE, x2=1.0) == 0.0
    assert _eval(EXAMPLE, x2=2.0) == 0.0
    assert _eval(EXAMPLE, x2=3.0) == pytest.approx(math.sin(1.0), abs=1e-12)


def test_piecewise_skips_untaken_branch():
    assert _eval("piecewise(x > 0, ln(x), 0)", x=-1.0) == 0.0


def test_unicode_comparison_matches_ascii():
    assert parse_expr("x ≤ 2") == parse_expr("x <= 2")


def test_source_round_trip():
    for src in (EXAMPLE, "-x^2 + 3*t", "pow(u1, 3) / (1 + abs(x1))", "2^3^2"):
        node = parse_expr(src)
        assert parse_expr(to_source(node)) == node


def test_free_variables():
    assert free_variables(parse_expr(EXAMPLE)) == {"x2"}
    assert free_variables(parse_expr("t*u1 + sin(x1)")) == {"t", "u1", "x1"}


@pytest.mark.parametrize("src, offset", [
    ("1 + $", 4),
    ("x ≤ @", 6),
    ("(1 + 2", 6),
    ("1 2", 2),
    ("foo(1)", 0),
    ("pow(1)", 0),
    ("sin + 1", 0),
])
def test_parse_error_offsets(src, offset):
    with pytest.raises(ParseError) as info:
        parse_expr(src)
    assert info.value.offset == offset


def test_unknown_identifier():
    with pytest.raises(ParseError) as info:
        parse_expr("x1 + x3", variables=["t", "x1", "x2"])
    assert info.value.offset == 5
    assert isinstance(info.value, ConfigError)


@pytest.mark.parametrize("src, env", [
    ("ln(x)", {"x": 0.0}),
    ("ln(x)", {"x": -2.0}),
    ("1 / x", {"x": 0.0}),
    ("pow(x, 0.5)", {"x": -1.0}),
    ("x + y", {"x": 1.0}),
])
def test_eval_errors(src, env):
    with pytest.raises(EvalError):
        evaluate(parse_expr(src), env)


def test_overflow_saturates():
    assert _eval("exp(1000)") == math.inf
