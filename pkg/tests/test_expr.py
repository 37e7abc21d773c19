import math

import numpy as np
import pytest

from proqoi import (GE_VARIABLES, Const, Power, QoiDomainError, Quotient, Scale, Sqrt, Sum, Var,
                    builtin_ge_qois, depth, evaluate, ge_closed_form, parse_qoi, to_text, variables)


def test_eval_pythagorean_triple():
    expr = parse_qoi("sqrt(a^2+b^2+c^2)", "abc")
    assert evaluate(expr, [3.0, 4.0, 0.0]) == 5.0


def test_eval_temperature():
    expr = parse_qoi("P / (D * 287.1)", ["P", "D"])
    assert evaluate(expr, [100000.0, 1.2]) == pytest.approx(100000 / (1.2 * 287.1), rel=1e-15)
    assert evaluate(expr, [100000.0, 1.2]) == pytest.approx(290.259, abs=5e-4)


def test_eval_constant():
    assert evaluate(Const(7.0), []) == 7.0
    assert evaluate(Const(7.0), [1.0, 2.0]) == 7.0


def test_eval_domain_errors():
    with pytest.raises(QoiDomainError):
        evaluate(Sqrt(Var(0)), [-1.0])
    with pytest.raises(QoiDomainError) as info:
        evaluate(Quotient(Const(1.0), Var(0)), [np.array([1.0, 0.0, 2.0])])
    assert info.value.index == 1
    loose = evaluate(Quotient(Const(1.0), Var(0)), [np.array([1.0, 0.0])], strict=False)
    assert loose[0] == 1.0 and math.isnan(loose[1])


def test_eval_arrays_elementwise():
    expr = parse_qoi("x*y - 2*x", ["x", "y"])
    x, y = np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0])
    np.testing.assert_array_equal(evaluate(expr, [x, y]), x * y - 2 * x)


def test_node_validation():
    with pytest.raises(ValueError):
        Var(-1)
    with pytest.raises(ValueError):
        Power(Var(0), 0)
    with pytest.raises(ValueError):
        Power(Var(0), True)
    with pytest.raises(ValueError):
        Scale(0.0, Var(0))
    with pytest.raises(ValueError):
        Sum([])
    with pytest.raises(ValueError):
        Const(float("nan"))


def test_helpers():
    expr = parse_qoi("sqrt(x^2 + y) / z", ["x", "y", "z"])
    assert variables(expr) == {0, 1, 2}
    assert depth(expr) == 5
    assert parse_qoi(to_text(expr, ["x", "y", "z"]), ["x", "y", "z"]) == expr


def test_ge_temperature_value():
    t = builtin_ge_qois()["T"]
    state = [0.0, 0.0, 0.0, 101325.0, 1.2]
    assert evaluate(t, state) == pytest.approx(294.105, abs=5e-4)


def test_ge_sound_speed_at_reference_temperature():
    c = builtin_ge_qois()["C"]
    d = 1.2
    p = 273.15 * d * 287.1  # gives T = 273.15
    assert evaluate(c, [0.0, 0.0, 0.0, p, d]) == pytest.approx(math.sqrt(1.4 * 287.1 * 273.15), rel=1e-14)
    assert evaluate(c, [0.0, 0.0, 0.0, p, d]) == pytest.approx(331.3456, abs=1e-4)


def test_ge_total_velocity():
    assert evaluate(builtin_ge_qois()["VTOT"], [3.0, 4.0, 0.0, 1e5, 1.0]) == 5.0


def test_ge_trees_use_only_primitive_nodes():
    qois = builtin_ge_qois()
    assert set(qois) == {"VTOT", "T", "C", "Mach", "PT", "MU"}
    for expr in qois.values():
        assert variables(expr) <= set(range(len(GE_VARIABLES)))


def test_ge_trees_match_closed_form_on_a_state():
    state = [120.0, -30.0, 45.0, 2.5e5, 1.7]
    direct = ge_closed_form(*[np.array([v]) for v in state])
    for name, expr in builtin_ge_qois().items():
        assert evaluate(expr, state) == pytest.approx(float(direct[name][0]), rel=1e-13)
