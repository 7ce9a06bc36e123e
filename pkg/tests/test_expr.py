import numpy as np
import pytest
from hypothesis import given, strategies as st

from sourceshape.expr import compile_expression, compile_region


@pytest.mark.parametrize("text, x, y, expected", [
    ("10(x+0.4-y^2)^2+x^2+y^2", 0.1, 0.2, 10 * (0.5 - 0.04) ** 2 + 0.05),
    ("2x*(1-x)+2y*(1-y)", 0.5, 0.25, 0.5 + 0.375),
    ("exp(-sqrt(2)/2*x) + exp(-sqrt(2)/2*y)", 0.0, 0.0, 2.0),
    ("sin(pi*x)*sin(pi*y)", 0.5, 0.5, 1.0),
    ("max(x, y, 0.3) - min(x, y)", 0.1, 0.2, 0.2),
    ("1.5e-2x", 2.0, 0.0, 0.03),
    ("(x+1)(y+1)", 1.0, 2.0, 6.0),
])
def test_expression_values(text, x, y, expected):
    assert compile_expression(text)(x, y) == pytest.approx(expected)


def test_constant_broadcasts():
    out = compile_expression(1.0)(np.zeros(4), np.zeros(4))
    assert out.shape == (4,) and np.all(out == 1.0)


@pytest.mark.parametrize("bad", ["__import__('os')", "x.real", "z + 1", "lambda: 1", "[1, 2]", "'a'"])
def test_rejects_unsafe_or_unknown(bad):
    with pytest.raises((ValueError, SyntaxError)):
        compile_expression(bad)


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_region_sign_matches_membership(x, y):
    r = compile_region("-0.1 < x < 0.6, 0.1 < y < 0.4")
    inside = -0.1 < x < 0.6 and 0.1 < y < 0.4
    v = float(r(x, y))
    assert (v < 0) == inside or abs(v) < 1e-12
    d = compile_region("x^2 + y^2 < 0.04")
    assert (float(d(x, y)) < 0) == (x * x + y * y < 0.04) or abs(x * x + y * y - 0.04) < 1e-12


def test_greater_than_flips_orientation():
    assert float(compile_region("x > 0.5")(1.0, 0.0)) < 0
    assert float(compile_region("x > 0.5")(0.0, 0.0)) > 0
