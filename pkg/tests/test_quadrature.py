"""Quadrature exactness against closed-form monomial integrals."""

import math

import numpy as np
import pytest

from femopt.quadrature import facet_rule, gauss_legendre_01, volume_rule


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_interval_rule_exactness(p):
    pts, w = volume_rule("interval", p)
    n = p + 2
    assert len(w) == n
    assert np.all(w > 0)
    for k in range(2 * n):  # exact through degree 2n-1
        got = float(w @ pts[:, 0] ** k)
        assert got == pytest.approx(1.0 / (k + 1), rel=1e-13)


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_quad_rule_exactness(p):
    pts, w = volume_rule("quad", p)
    n = p + 2
    assert len(w) == n * n
    assert np.all(w > 0)
    for a in range(0, 2 * n, 3):
        for b in range(0, 2 * n, 3):
            got = float(w @ (pts[:, 0] ** a * pts[:, 1] ** b))
            assert got == pytest.approx(1.0 / ((a + 1) * (b + 1)), rel=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_triangle_rule_exactness(p):
    # int_T x^a y^b dA = a! b! / (a+b+2)! on the unit reference triangle
    pts, w = volume_rule("triangle", p)
    assert np.all(w > 0)
    assert float(np.sum(w)) == pytest.approx(0.5, rel=1e-14)
    inside = (pts[:, 0] >= 0) & (pts[:, 1] >= 0) & (pts[:, 0] + pts[:, 1] <= 1 + 1e-14)
    assert np.all(inside)
    for a in range(2 * p + 3):
        for b in range(2 * p + 3 - a):
            want = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            got = float(w @ (pts[:, 0] ** a * pts[:, 1] ** b))
            assert got == pytest.approx(want, rel=1e-12), (a, b)


def test_facet_rule_is_1d_gauss():
    x, w = facet_rule(3)
    xr, wr = gauss_legendre_01(5)
    assert np.array_equal(x, xr) and np.array_equal(w, wr)
    assert float(np.sum(w)) == pytest.approx(1.0, rel=1e-15)


def test_rules_are_cached_and_deterministic():
    a = volume_rule("triangle", 3)
    b = volume_rule("triangle", 3)
    assert a[0] is b[0]
