import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coldwave import expr as ex
from coldwave.expr import Jet, jsqrt, parse_expr, wave

finite = st.floats(-3.0, 3.0, allow_nan=False)


def fd(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h), (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)


def test_jet_product_rule():
    a = Jet(2.0, 3.0, 1.0)
    b = Jet(5.0, -1.0, 4.0)
    c = a * b
    assert (c.v, c.d1, c.d2) == (10.0, 13.0, 2 * 3.0 * -1.0 + 1.0 * 5.0 + 2.0 * 4.0)


def test_jet_quotient_and_power():
    x = Jet(1.5, 1.0, 0.0)
    q = 1.0 / x
    assert q.d1 == pytest.approx(-1 / 1.5**2)
    assert q.d2 == pytest.approx(2 / 1.5**3)
    p = x**3
    assert (p.v, p.d1, p.d2) == pytest.approx((1.5**3, 3 * 1.5**2, 6 * 1.5))


def test_jsqrt_on_floats_and_jets():
    assert jsqrt(4.0) == 2.0
    j = jsqrt(Jet(4.0, 1.0, 0.0))
    assert j.d1 == pytest.approx(0.25)
    assert j.d2 == pytest.approx(-1 / 32)


@given(finite)
def test_expression_derivatives_match_finite_differences(x):
    e = ex.sin(ex.rho * 2.0) * ex.cos(ex.rho) + ex.sqrt(ex.rho * ex.rho + 1.0) / (ex.rho ** 2 + 3.0)
    f = lambda t: float(e(t))
    d1, d2 = fd(f, x)
    assert float(e.d1(x)) == pytest.approx(d1, abs=1e-6)
    assert float(e.d2(x)) == pytest.approx(d2, abs=1e-4)


@given(st.floats(0.01, 2.0), st.floats(0.1, 5.0), finite)
def test_wave_values(a, k, x):
    s = wave(a, k)
    c = wave(a, k, kind="cos")
    assert float(s(x)) == pytest.approx(a * math.sin(k * x), abs=1e-14)
    assert float(s.d1(x)) == pytest.approx(a * k * math.cos(k * x), abs=1e-13)
    assert float(c.d2(x)) == pytest.approx(-a * k * k * math.cos(k * x), abs=1e-12)


def test_parse_expr_roundtrip_and_arrays():
    e = parse_expr("0.1*sin(2*rho) + rho**2/(1 + cos(rho)) - pi")
    x = np.linspace(0.0, 1.0, 7)
    ref = 0.1 * np.sin(2 * x) + x**2 / (1 + np.cos(x)) - math.pi
    assert np.allclose(e(x), ref, atol=1e-15)
    again = parse_expr(str(e))
    assert np.allclose(again(x), ref, atol=1e-14)


@pytest.mark.parametrize("text", ["exp(rho)", "rho +", "__import__('os')", "x*2", "rho[0]"])
def test_parse_expr_rejects(text):
    with pytest.raises(ValueError):
        parse_expr(text)


def test_polynomial():
    p = ex.polynomial([1.0, -2.0, 3.0])  # 1 - 2 rho + 3 rho**2
    assert float(p(2.0)) == pytest.approx(9.0)
    assert float(p.d1(2.0)) == pytest.approx(10.0)
    assert float(p.d2(2.0)) == pytest.approx(6.0)
