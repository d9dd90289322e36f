import numpy as np
import pytest

from coneembed.geometry import EuclideanSpace, MetricCone, PoincareBall


def random_points(space, n, rng):
    """Points spread over the interesting part of ``space``."""
    if isinstance(space, MetricCone):
        base = random_points(space.base, n, rng)
        h = rng.uniform(0.05, 0.95, size=(n, 1))
        return np.concatenate([base, h], axis=1)
    if isinstance(space, PoincareBall):
        x = rng.normal(size=(n, space.dim))
        r = rng.uniform(0.0, 0.9, size=(n, 1))
        return x / np.linalg.norm(x, axis=1, keepdims=True) * r
    return rng.normal(size=(n, space.dim))


SPACES = {
    "euclidean": EuclideanSpace(3),
    "poincare": PoincareBall(3),
    "cone-euclidean": MetricCone(EuclideanSpace(3), beta=2.0),
    "cone-poincare": MetricCone(PoincareBall(3), beta=1.5),
}


@pytest.fixture(params=list(SPACES), ids=list(SPACES))
def space(request):
    return SPACES[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
