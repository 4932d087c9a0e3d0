import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orliczfem.expr import ExpressionError, compile_expression


def test_arithmetic_and_precedence():
    e = compile_expression("1 + 2*3^2 - 4/2", ())
    assert e.is_constant
    assert float(e({})) == 1 + 2 * 9 - 2


def test_power_is_right_associative_and_unary_minus_binds_looser():
    assert float(compile_expression("2^3^2", ())({})) == 2.0**9
    assert float(compile_expression("-2^2", ())({})) == -4.0


def test_variables_broadcast():
    e = compile_expression("x1^2 + 4*x2^2", ("x1", "x2"))
    assert e.used == {"x1", "x2"}
    out = e({"x1": np.array([1.0, 2.0]), "x2": np.array([0.5, 0.0])})
    np.testing.assert_allclose(out, [2.0, 4.0])


def test_functions():
    e = compile_expression("abs(x) + sqrt(4) + exp(0) + ln(1) + max(x, 0)", ("x",))
    np.testing.assert_allclose(e({"x": np.array([-3.0, 2.0])}), [3 + 2 + 1, 2 + 2 + 1 + 2])


def test_constant_broadcasts_to_variable_shape():
    e = compile_expression("1", ("x",))
    assert np.shape(e({"x": np.zeros(3)})) == ()


@pytest.mark.parametrize("src", ["1 +", "x1 ** + 2", "(1", "foo(1)", "y", "1 2", ""])
def test_malformed_input_raises_with_position(src):
    with pytest.raises(ExpressionError) as info:
        compile_expression(src, ("x1", "x"))
    assert info.value.column >= 1


def test_offsets_shift_reported_position():
    with pytest.raises(ExpressionError) as info:
        compile_expression("1 + )", (), line_offset=10, column_offset=7)
    assert info.value.line == 11
    assert info.value.column == 5 + 7


@settings(max_examples=60, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_matches_python_arithmetic(a, b):
    e = compile_expression("a*b - (a + b)/3 + abs(a)", ("a", "b"))
    assert math.isclose(float(e({"a": a, "b": b})), a * b - (a + b) / 3 + abs(a), rel_tol=1e-12, abs_tol=1e-12)
