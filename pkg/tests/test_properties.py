"""Property-based checks of geometric invariants."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coneembed.geometry import EuclideanSpace, MetricCone, PoincareBall, poincare_isometry

finite = st.floats(-5, 5, allow_nan=False)
heights = st.floats(0.0, 1.0)
betas = st.floats(0.05, 10.0)


def ball_point(dim):
    return arrays(np.float64, dim, elements=st.floats(-0.55, 0.55))


@given(st.floats(0, 20), heights, heights, betas)
def test_cone_distance_symmetric_and_bounded(dz, s, t, beta):
    cone = MetricCone(EuclideanSpace(1), beta=beta)
    d = cone.distance_from_base(dz, s, t)
    assert d == cone.distance_from_base(dz, t, s)
    # between the same-ray and opposite-ray extremes
    assert beta * abs(s - t) - 1e-12 <= d <= beta * (s + t) + 1e-12


@given(st.floats(1.0, 50.0), heights, heights, betas)
def test_cone_saturation(k, s, t, beta):
    cone = MetricCone(EuclideanSpace(1), beta=beta)
    assert cone.distance_from_base(k * beta, s, t) == cone.distance_from_base(beta, s, t)


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, 3, elements=heights), betas)
def test_cone_triangle(base, h, beta):
    cone = MetricCone(EuclideanSpace(4), beta=beta)
    x, y, z = np.column_stack([base, h])
    assert cone.distance(x, z) <= cone.distance(x, y) + cone.distance(y, z) + 1e-9


@given(ball_point(3), ball_point(3), ball_point(3))
@settings(max_examples=200)
def test_mobius_isometry(x, y, a):
    ball = PoincareBall(3)
    d0 = ball.distance(x, y)
    d1 = ball.distance(poincare_isometry(x, a), poincare_isometry(y, a))
    assert math.isclose(d0, d1, rel_tol=1e-9, abs_tol=1e-9)


@given(arrays(np.float64, 4, elements=finite), st.floats(-2, 3), st.floats(1e-4, 0.4))
def test_project_idempotent(base, s, eps):
    cone = MetricCone(EuclideanSpace(4), eps=eps)
    p = cone.project(np.append(base, s))
    assert eps <= p[-1] <= 1 - eps
    assert np.array_equal(cone.project(p), p)


@given(arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_poincare_projection_inside(x):
    p = PoincareBall(3).project(x)
    assert np.linalg.norm(p) < 1.0


@given(ball_point(2), arrays(np.float64, 2, elements=finite), st.floats(0.05, 0.95), st.floats(0.1, 5))
def test_cone_rescale_inverts_metric(x, g, s, beta):
    cone = MetricCone(PoincareBall(2), beta=beta)
    p = np.append(x, s)
    grad = np.append(g, 1.3)
    r = cone.rescale(p, grad)
    assert np.allclose(cone.metric_tensor(p) @ r, grad, rtol=1e-12, atol=1e-12)
