import math

import numpy as np
import pytest

from harmlab.expr import Expression, ExprError, parse


@pytest.mark.parametrize(
    "text, x, y, expected",
    [
        ("1 + 2 * 3", 0, 0, 7.0),
        ("-2^2", 0, 0, -4.0),
        ("2^3^2", 0, 0, 512.0),
        ("(1 + x) / 2", 3, 0, 2.0),
        ("x * y - y", 2, 5, 5.0),
        ("sin(pi * x)", 0.5, 0, 1.0),
        ("exp(0) + abs(-3) + cos(0)", 0, 0, 5.0),
        ("1e-3 * 2", 0, 0, 2e-3),
        (".5 + +x", 1, 0, 1.5),
    ],
)
def test_evaluation(text, x, y, expected):
    assert float(Expression(text)(x, y)) == pytest.approx(expected, rel=1e-14)


def test_broadcasting():
    e = Expression("x + y")
    out = e(np.arange(3.0), 1.0)
    np.testing.assert_array_equal(out, [1.0, 2.0, 3.0])
    assert Expression("2")(np.zeros(4)).shape == (4,)


@pytest.mark.parametrize(
    "text, pos",
    [("1 +", 3), ("sin x", 4), ("foo(1)", 0), ("1 $ 2", 2), ("(1 + 2", 6), ("1 2", 2)],
)
def test_errors_report_position(text, pos):
    with pytest.raises(ExprError) as err:
        parse(text)
    assert err.value.pos == pos
    assert f"position {pos}" in str(err.value)


def test_non_string_rejected():
    with pytest.raises(ExprError):
        parse(3.0)


@pytest.mark.parametrize(
    "text",
    [
        "sin(pi*x)*exp(x)/2",
        "x^3 - 2*x*y + y^2",
        "cos(x + 2*y) / (1 + x^2)",
        "exp(-x) * abs(x - 5)",
        "(1 + x)^(y + 1)",
    ],
)
def test_derivatives_match_finite_differences(text):
    e = Expression(text)
    x = np.linspace(0.1, 0.9, 7)
    y = 0.3
    h = 1e-6
    fd_x = (e(x + h, y) - e(x - h, y)) / (2 * h)
    fd_y = (e(x, y + h) - e(x, y - h)) / (2 * h)
    np.testing.assert_allclose(e.derivative("x")(x, y), fd_x, rtol=1e-7, atol=1e-8)
    np.testing.assert_allclose(e.derivative("y")(x, y), fd_y, rtol=1e-7, atol=1e-8)


def test_second_derivative_of_manufactured_solution():
    e = Expression("sin(pi*x)*exp(x)/2")
    x = np.linspace(0, 1, 5)
    exact = 0.5 * np.exp(x) * ((1 - math.pi**2) * np.sin(math.pi * x) + 2 * math.pi * np.cos(math.pi * x))
    np.testing.assert_allclose(e.derivative("x").derivative("x")(x), exact, rtol=1e-13, atol=1e-13)


def test_bad_derivative_variable():
    with pytest.raises(ExprError):
        Expression("x").derivative("z")
