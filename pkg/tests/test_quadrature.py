import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vexflow.quadrature import MAX_DEGREE, monomial_integral, quadrature_rule


def _integrate(rule, exponents):
    x = rule.reference_points
    return float(np.sum(rule.weights * np.prod(x ** np.asarray(exponents), axis=1)))


def test_centroid_rule_area():
    rule = quadrature_rule(2, 1)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-16)


def test_xy_on_reference_tet():
    assert _integrate(quadrature_rule(3, 2), (1, 1, 0)) == pytest.approx(1 / 120, abs=1e-16)


def test_monomial_oracle():
    # int_T x^a y^b = a! b! / (a + b + 2)!
    assert monomial_integral((2, 3)) == pytest.approx(2 * 6 / math.factorial(7))


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_exactness_and_positivity(dim, degree):
    rule = quadrature_rule(dim, degree)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(1 / math.factorial(dim), abs=1e-15)
    np.testing.assert_allclose(rule.points.sum(axis=1), 1.0, atol=1e-15)
    for exps in itertools.product(range(degree + 1), repeat=dim):
        if sum(exps) <= degree:
            assert _integrate(rule, exps) == pytest.approx(monomial_integral(exps), rel=1e-12, abs=1e-16)


@pytest.mark.parametrize("degree", [0, 9])
def test_unsupported_degree(degree):
    with pytest.raises(ValueError):
        quadrature_rule(2, degree)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 3), st.integers(1, MAX_DEGREE), st.integers(0, 2**31 - 1))
def test_random_polynomial_exact(dim, degree, seed):
    rng = np.random.default_rng(seed)
    rule = quadrature_rule(dim, degree)
    terms = [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    coef = rng.standard_normal(len(terms))
    got = sum(c * _integrate(rule, e) for c, e in zip(coef, terms))
    exact = sum(c * monomial_integral(e) for c, e in zip(coef, terms))
    assert got == pytest.approx(exact, rel=1e-11, abs=1e-14)
