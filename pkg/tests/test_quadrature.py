"""Quadrature rules against the closed-form monomial integrals."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbf2d.quadrature import TRIANGLE_MAX_DEGREE, edge_rule, triangle_rule


def monomial_integral(a, b):
    # int over the reference triangle of x^a y^b
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", range(1, TRIANGLE_MAX_DEGREE + 1))
def test_triangle_rule_integrates_monomials(degree):
    rule = triangle_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = np.sum(rule.weights
                            * rule.points[:, 0] ** a
                            * rule.points[:, 1] ** b)
            assert approx == pytest.approx(monomial_integral(a, b),
                                           rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("degree", range(1, TRIANGLE_MAX_DEGREE + 1))
def test_triangle_rule_weights(degree):
    rule = triangle_rule(degree)
    assert np.all(rule.weights > 0)
    assert np.sum(rule.weights) == pytest.approx(0.5, rel=1e-13)


@given(st.integers(min_value=1, max_value=20), st.integers(0, 20))
@settings(max_examples=40, deadline=None)
def test_edge_rule_integrates_monomials(degree, a):
    rule = edge_rule(degree)
    approx = np.sum(rule.weights * rule.points ** min(a, degree))
    exact = 1.0 / (min(a, degree) + 1)
    assert approx == pytest.approx(exact, rel=1e-12)


def test_degree_out_of_range():
    with pytest.raises(ValueError):
        triangle_rule(TRIANGLE_MAX_DEGREE + 1)
