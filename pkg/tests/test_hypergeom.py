import math

import pytest
from hypothesis import given, settings, strategies as st
from scipy import special
from scipy.integrate import quad

from qhvol.hypergeom import f111, f111_gap, hyp2f1


def euler_integral(a, b, c, x):
    """F(a, b; c; x) for c > b > 0 from the Euler integral representation."""
    beta = special.beta(b, c - b)
    val = quad(lambda t: t ** (b - 1) * (1 - t) ** (c - b - 1) * (1 - x * t) ** (-a), 0, 1,
               epsabs=0, epsrel=1e-13, limit=200)[0]
    return val / beta


@settings(max_examples=80, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 6), st.floats(-0.95, 0.95))
def test_hyp2f1_against_scipy(a, b, c, x):
    want = special.hyp2f1(a, b, c, x)
    assert hyp2f1(a, b, c, x) == pytest.approx(want, rel=1e-11, abs=1e-12)


@pytest.mark.parametrize("a,b,c,x", [(1, 1, 3, 0.9), (1.5, 2, 3.5, 0.99), (0.5, 0.5, 2.5, -0.7)])
def test_hyp2f1_against_euler_integral(a, b, c, x):
    assert hyp2f1(a, b, c, x) == pytest.approx(euler_integral(a, b, c, x), rel=1e-10)


def test_gauss_summation_at_one():
    a, b, c = 0.5, 1.0, 3.0
    want = math.gamma(c) * math.gamma(c - a - b) / (math.gamma(c - a) * math.gamma(c - b))
    assert hyp2f1(a, b, c, 1.0) == pytest.approx(want, rel=1e-14)
    with pytest.raises(ValueError):
        hyp2f1(1, 1, 2, 1.0)
    with pytest.raises(ValueError):
        hyp2f1(1, 1, -2, 0.5)
    with pytest.raises(ValueError):
        hyp2f1(1, 1, 2, 1.5)


@pytest.mark.parametrize("n", [2, 3, 4, 7])
def test_f111_endpoints(n):
    assert f111(n, 0.0) == 1.0
    assert f111(n, 1.0) == pytest.approx(n / (n - 1), rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.floats(0, 0.999999))
def test_f111_against_euler_integral(n, x):
    assert f111(n, x) == pytest.approx(euler_integral(1, 1, n + 1, x), rel=1e-9)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_f111_gap_is_accurate_near_one(n):
    # near x = 1 the gap form keeps full precision where 1 - x would round
    for y in (1e-3, 1e-8, 1e-14):
        want = euler_integral(1, 1, n + 1, 1 - y)
        assert f111_gap(n, y) == pytest.approx(want, rel=1e-8)
    assert f111_gap(n, 0.0) == pytest.approx(n / (n - 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.floats(0, 1))
def test_f111_is_increasing(n, x):
    assert f111(n, x) >= f111(n, 0.5 * x) - 1e-15


def test_f111_rejects_bad_input():
    with pytest.raises(ValueError):
        f111(2, 1.1)
    with pytest.raises(ValueError):
        f111_gap(1, 0.5)
