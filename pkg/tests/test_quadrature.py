import numpy as np
import pytest

from hpdg.quadrature import (MAX_ORDER, default_order, element_rule, gauss_segment,
                             tensor_square, triangle_rule)
from oracles import square_monomial, triangle_monomial


def test_segment_cubic():
    r = gauss_segment(3)
    assert abs(r.weights @ r.points[:, 0] ** 3 - 0.25) < 1e-15


def test_square_x2y2():
    r = tensor_square(4)
    x, y = r.points.T
    assert abs(r.weights @ (x ** 2 * y ** 2) - 1 / 9) < 1e-15


def test_triangle_order_zero_area():
    r = triangle_rule(0)
    assert abs(r.weights.sum() - 0.5) < 1e-15


@pytest.mark.parametrize("order", [1, 2, 5, 8, 13, 20])
def test_exactness_sweep(order):
    sq, tri = tensor_square(order), triangle_rule(order)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            got = sq.weights @ (sq.points[:, 0] ** a * sq.points[:, 1] ** b)
            assert abs(got - float(square_monomial(a, b))) < 1e-13
            got = tri.weights @ (tri.points[:, 0] ** a * tri.points[:, 1] ** b)
            assert abs(got - float(triangle_monomial(a, b))) < 1e-13


@pytest.mark.parametrize("rule,measure", [(gauss_segment, 1.0), (tensor_square, 1.0), (triangle_rule, 0.5)])
def test_weights_positive_and_sum(rule, measure):
    for order in (1, 7, 30):
        r = rule(order)
        assert np.all(r.weights > 0)
        assert abs(r.weights.sum() - measure) < 1e-14
        assert r.order >= order


def test_triangle_points_inside():
    p = triangle_rule(12).points
    assert np.all(p > 0) and np.all(p.sum(axis=1) < 1)


@pytest.mark.parametrize("bad", [-1, MAX_ORDER + 1])
def test_order_out_of_range(bad):
    with pytest.raises(ValueError):
        gauss_segment(bad)


def test_rules_are_cached_and_readonly():
    r = tensor_square(6)
    assert r is tensor_square(6)
    with pytest.raises(ValueError):
        r.points[0, 0] = 1.0


def test_element_rule_dispatch():
    assert element_rule("quad", 3) is tensor_square(3)
    assert element_rule("triangle", 3) is triangle_rule(3)
    with pytest.raises(ValueError):
        element_rule("hexagon", 3)


def test_default_order():
    assert default_order(3) == 8
    assert default_order(2, 5) == 12
    assert default_order(20) == MAX_ORDER
