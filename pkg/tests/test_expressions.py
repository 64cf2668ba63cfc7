import numpy as np
import pytest

from measurefk.expressions import (ExpressionError, compile_driver,
                                   compile_scalar_field)


def test_basic_arithmetic_and_functions():
    f = compile_scalar_field("pi^2*sin(pi*x) + sin(pi*x)^3", 1)
    x = np.linspace(0, 1, 11).reshape(-1, 1)
    expected = np.pi**2 * np.sin(np.pi * x[:, 0]) + np.sin(np.pi * x[:, 0])**3
    assert np.allclose(f(x), expected)


def test_precedence_and_unary_minus():
    f = compile_scalar_field("-x^2", 1)
    assert f(np.array([[2.0]]))[0] == -4.0
    g = compile_scalar_field("2*x + 3*x", 1)
    assert g(np.array([[1.0]]))[0] == 5.0
    h = compile_scalar_field("2^3^2", 1)  # right associative
    assert h(np.array([[0.0]]))[0] == 512.0


def test_multi_coordinate_and_minmax():
    f = compile_scalar_field("1/min(x1, 1 - x2) + abs(x2)", 2)
    pts = np.array([[0.25, 0.5]])
    assert f(pts)[0] == pytest.approx(1 / 0.25 + 0.5)


def test_driver_uses_u():
    f = compile_driver("-u^3 + sin(x)", 1)
    pts = np.array([[0.3]])
    assert f(pts, np.array([2.0]))[0] == pytest.approx(-8.0 + np.sin(0.3))


def test_constant_expression_broadcasts():
    f = compile_scalar_field("2", 1)
    assert np.array_equal(f(np.zeros((5, 1))), np.full(5, 2.0))


@pytest.mark.parametrize("bad", ["x 2", "foo(x)", "x3", "u", "(x", "1..2", "min(x)"])
def test_rejects_malformed(bad):
    with pytest.raises(ExpressionError):
        compile_scalar_field(bad, 1)


def test_u_rejected_outside_driver():
    with pytest.raises(ExpressionError):
        compile_scalar_field("u + 1", 1)
    compile_driver("u + 1", 1)  # fine here
