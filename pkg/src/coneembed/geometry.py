"""Embedding spaces: Euclidean space, the Poincare ball and metric cones.

All spaces operate on float64 arrays whose last axis holds the point
coordinates, so every method broadcasts over leading batch axes. A point of a
:class:`MetricCone` is stored as its base coordinates followed by one height
column, i.e. an array of shape ``(..., base.dim + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EuclideanSpace",
    "PoincareBall",
    "MetricCone",
    "ConePoint",
    "euclidean_distance",
    "poincare_distance",
    "cone_distance",
    "riemannian_rescale",
    "project",
    "poincare_isometry",
    "cone_scalar_curvature",
    "cone_ricci_curvature",
    "parse_space",
]


def _check_same_dim(x, y):
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} != {y.shape[-1]}")


def _safe_div(num, den):
    """num / den with 0 wherever den == 0 (subgradient at coincident points)."""
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


class EuclideanSpace:
    """Flat space R^d with the identity metric."""

    kind = "euclidean"

    def __init__(self, dim: int):
        if int(dim) < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)

    @property
    def point_dim(self) -> int:
        return self.dim

    def __repr__(self):
        return f"EuclideanSpace(dim={self.dim})"

    def __eq__(self, other):
        return isinstance(other, EuclideanSpace) and other.dim == self.dim

    def descriptor(self) -> str:
        return f"euclidean:{self.dim}"

    def distance(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        _check_same_dim(x, y)
        return np.sqrt(np.sum((x - y) ** 2, axis=-1))

    def distance_grad(self, x, y):
        """Return ``(d, dd/dx, dd/dy)``; the gradient is taken as 0 where x == y."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        diff = x - y
        d = np.sqrt(np.sum(diff**2, axis=-1))
        gx = _safe_div(diff, d[..., None])
        return d, gx, -gx

    def metric_tensor(self, x):
        return np.eye(self.dim)

    def rescale(self, x, grad):
        return np.array(grad, dtype=np.float64, copy=True)

    def project(self, x):
        return np.array(x, dtype=np.float64, copy=True)

    def random_init(self, n, rng, scale=1e-3):
        return rng.uniform(-scale, scale, size=(n, self.dim))


class PoincareBall:
    """Open unit ball with the hyperbolic metric ``(2 / (1 - |x|^2))^2 I``."""

    kind = "poincare"

    def __init__(self, dim: int, boundary_eps: float = 1e-5):
        if int(dim) < 1:
            raise ValueError("dim must be >= 1")
        if not 0.0 < boundary_eps < 1.0:
            raise ValueError("boundary_eps must lie in (0, 1)")
        self.dim = int(dim)
        self.boundary_eps = float(boundary_eps)

    @property
    def point_dim(self) -> int:
        return self.dim

    def __repr__(self):
        return f"PoincareBall(dim={self.dim}, boundary_eps={self.boundary_eps})"

    def __eq__(self, other):
        return (
            isinstance(other, PoincareBall)
            and other.dim == self.dim
            and other.boundary_eps == self.boundary_eps
        )

    def descriptor(self) -> str:
        return f"poincare:{self.dim}"

    @staticmethod
    def _check_inside(*points):
        for p in points:
            if np.any(np.sum(p * p, axis=-1) >= 1.0):
                raise ValueError("point lies on or outside the unit ball")

    def distance(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        _check_same_dim(x, y)
        self._check_inside(x, y)
        sq = np.sum((x - y) ** 2, axis=-1)
        denom = (1.0 - np.sum(x * x, axis=-1)) * (1.0 - np.sum(y * y, axis=-1))
        z = 2.0 * sq / denom
        # arcosh(1 + z) without cancellation for small z
        return np.log1p(z + np.sqrt(z * (z + 2.0)))

    def distance_grad(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self._check_inside(x, y)
        diff = x - y
        sq = np.sum(diff**2, axis=-1)
        ax = 1.0 - np.sum(x * x, axis=-1)
        ay = 1.0 - np.sum(y * y, axis=-1)
        z = 2.0 * sq / (ax * ay)
        root = np.sqrt(z * (z + 2.0))
        d = np.log1p(z + root)
        # dz/dx = 4/(ax*ay) * (diff + sq * x / ax), and dd/dz = 1/sqrt(z(z+2))
        c = _safe_div(4.0 / (ax * ay), root)[..., None]
        gx = c * (diff + (sq / ax)[..., None] * x)
        gy = c * (-diff + (sq / ay)[..., None] * y)
        return d, gx, gy

    def metric_tensor(self, x):
        x = np.asarray(x, dtype=np.float64)
        lam = 2.0 / (1.0 - x @ x)
        return lam**2 * np.eye(self.dim)

    def rescale(self, x, grad):
        x = np.asarray(x, dtype=np.float64)
        factor = (1.0 - np.sum(x * x, axis=-1)) ** 2 / 4.0
        return np.asarray(grad, dtype=np.float64) * factor[..., None]

    def project(self, x):
        x = np.array(x, dtype=np.float64, copy=True)
        max_norm = 1.0 - self.boundary_eps
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
        over = norm >= max_norm
        np.multiply(x, max_norm / np.where(over, norm, 1.0), out=x, where=over)
        return x

    def random_init(self, n, rng, scale=1e-3):
        return rng.uniform(-scale, scale, size=(n, self.dim))


class MetricCone:
    """Metric cone ``Z x [0, 1] / Z x {0}`` over a Euclidean or Poincare base.

    Parameters
    ----------
    base : EuclideanSpace or PoincareBall
        The space ``Z`` the cone is built over.
    beta : float
        Generatrix length. Base distances at or beyond ``beta`` saturate the
        apex angle at pi.
    eps : float
        Heights are clamped to ``[eps, 1 - eps]``.
    """

    kind = "cone"

    def __init__(self, base, beta: float = 1.0, eps: float = 1e-3):
        if not isinstance(base, (EuclideanSpace, PoincareBall)):
            raise TypeError("cone base must be EuclideanSpace or PoincareBall")
        if not beta > 0:
            raise ValueError("beta must be positive")
        if not 0.0 < eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")
        self.base = base
        self.beta = float(beta)
        self.eps = float(eps)

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def point_dim(self) -> int:
        return self.base.dim + 1

    def __repr__(self):
        return f"MetricCone(base={self.base!r}, beta={self.beta}, eps={self.eps})"

    def __eq__(self, other):
        return (
            isinstance(other, MetricCone)
            and other.base == self.base
            and other.beta == self.beta
            and other.eps == self.eps
        )

    def descriptor(self) -> str:
        return f"cone:{self.base.descriptor()}"

    def angle(self, base_dist):
        return math.pi * np.minimum(np.asarray(base_dist, dtype=np.float64) / self.beta, 1.0)

    def distance_from_base(self, base_dist, s, t):
        """Cone distance given the base distance and the two heights."""
        base_dist = np.asarray(base_dist, dtype=np.float64)
        if np.any(base_dist < 0):
            raise ValueError("base distance must be nonnegative")
        half = 0.5 * self.angle(base_dist)
        # s^2 + t^2 - 2 s t cos(theta), written to stay nonnegative
        q = (s - t) ** 2 + 4.0 * s * t * np.sin(half) ** 2
        return self.beta * np.sqrt(q)

    def distance(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        _check_same_dim(x, y)
        dz = self.base.distance(x[..., :-1], y[..., :-1])
        return self.distance_from_base(dz, x[..., -1], y[..., -1])

    def distance_grad_from_base(self, base_dist, s, t):
        """Return ``(d, dd/ds, dd/dt, dd/d(base_dist))``."""
        base_dist = np.asarray(base_dist, dtype=np.float64)
        theta = self.angle(base_dist)
        sh = np.sin(0.5 * theta)
        q = (s - t) ** 2 + 4.0 * s * t * sh * sh
        d = self.beta * np.sqrt(q)
        b2 = self.beta * self.beta
        cos_t = np.cos(theta)
        dds = _safe_div(b2 * (s - t * cos_t), d)
        ddt = _safe_div(b2 * (t - s * cos_t), d)
        # angle saturates for base_dist >= beta: zero subgradient there
        dtheta = np.where(base_dist < self.beta, math.pi / self.beta, 0.0)
        ddz = _safe_div(b2 * s * t * np.sin(theta) * dtheta, d)
        return d, dds, ddt, ddz

    def distance_grad(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        dz, gzx, gzy = self.base.distance_grad(x[..., :-1], y[..., :-1])
        d, dds, ddt, ddz = self.distance_grad_from_base(dz, x[..., -1], y[..., -1])
        gx = np.concatenate([ddz[..., None] * gzx, dds[..., None]], axis=-1)
        gy = np.concatenate([ddz[..., None] * gzy, ddt[..., None]], axis=-1)
        return d, gx, gy

    def metric_tensor(self, x):
        x = np.asarray(x, dtype=np.float64)
        s = x[-1]
        g = np.zeros((self.point_dim, self.point_dim))
        g[:-1, :-1] = math.pi**2 * s**2 * self.base.metric_tensor(x[:-1])
        g[-1, -1] = self.beta**2
        return g

    def rescale(self, x, grad):
        x = np.asarray(x, dtype=np.float64)
        grad = np.asarray(grad, dtype=np.float64)
        s = x[..., -1]
        out = np.empty(np.broadcast(x, grad).shape)
        out[..., :-1] = self.base.rescale(x[..., :-1], grad[..., :-1]) / (
            math.pi**2 * s**2
        )[..., None]
        out[..., -1] = grad[..., -1] / self.beta**2
        return out

    def project(self, x):
        x = np.array(x, dtype=np.float64, copy=True)
        x[..., :-1] = self.base.project(x[..., :-1])
        np.clip(x[..., -1], self.eps, 1.0 - self.eps, out=x[..., -1])
        return x

    def random_init(self, n, rng, scale=1e-3, height_range=(0.4, 0.6)):
        base = self.base.random_init(n, rng, scale)
        heights = rng.uniform(*height_range, size=n)
        return np.concatenate([base, heights[:, None]], axis=1)


@dataclass(frozen=True)
class ConePoint:
    """A cone point: base coordinates plus a height."""

    base_coords: np.ndarray
    height: float

    def as_array(self):
        return np.append(np.asarray(self.base_coords, dtype=np.float64), self.height)


def euclidean_distance(x, y) -> float:
    return float(EuclideanSpace(np.shape(x)[-1]).distance(x, y))


def poincare_distance(x, y) -> float:
    """Hyperbolic distance ``arcosh(1 + 2|x-y|^2 / ((1-|x|^2)(1-|y|^2)))``."""
    return float(PoincareBall(np.shape(x)[-1]).distance(x, y))


def cone_distance(p: ConePoint, q: ConePoint, base_dist=None, *, beta=1.0, base=None):
    """Distance between two cone points.

    When ``base_dist`` is given the base coordinates are never read, which is
    the fast path used with a precomputed base distance matrix.
    """
    if base is None:
        base = EuclideanSpace(max(len(np.atleast_1d(p.base_coords)), 1))
    cone = MetricCone(base, beta=beta, eps=1e-3)
    if base_dist is None:
        base_dist = base.distance(p.base_coords, q.base_coords)
    elif base_dist < 0:
        raise ValueError("base distance must be nonnegative")
    return float(cone.distance_from_base(base_dist, p.height, q.height))


def riemannian_rescale(space, point, euclidean_grad):
    point = np.asarray(point, dtype=np.float64)
    euclidean_grad = np.asarray(euclidean_grad, dtype=np.float64)
    _check_same_dim(point, euclidean_grad)
    if point.shape[-1] != space.point_dim:
        raise ValueError("point dimension does not match the space")
    return space.rescale(point, euclidean_grad)


def project(space, point):
    return space.project(point)


def poincare_isometry(x, a):
    """Mobius gyro-translation ``a (+) x`` of the Poincare ball.

    Preserves hyperbolic distances and maps the origin to ``a``.
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    PoincareBall._check_inside(x, a)
    xy = np.sum(a * x, axis=-1, keepdims=True)
    xx = np.sum(x * x, axis=-1, keepdims=True)
    aa = np.sum(a * a, axis=-1, keepdims=True)
    num = (1.0 + 2.0 * xy + xx) * a + (1.0 - aa) * x
    return num / (1.0 + 2.0 * xy + aa * xx)


def cone_scalar_curvature(base_scalar_R: float, n: int, beta: float, s: float) -> float:
    """Scalar curvature of the cone at height ``s`` over an n-dim base."""
    if s == 0:
        raise ValueError("scalar curvature is undefined at the apex (s = 0)")
    return (base_scalar_R / math.pi**2 - n * (n - 1) / beta**2) / s**2


def cone_ricci_curvature(base_ricci_entry, base_metric_entry, n, beta, index_pair):
    """Ricci tensor entry of the cone; index 0 is the height coordinate.

    Base-index entries use the correction ``pi^2 (n-1) beta^-2 g`` with the
    base metric ``g`` (not the cone metric).
    """
    i, j = index_pair
    if i == 0 or j == 0:
        return 0.0
    return base_ricci_entry - math.pi**2 * (n - 1) / beta**2 * base_metric_entry


def parse_space(spec: str, beta: float = 1.0, eps: float = 1e-3, boundary_eps: float = 1e-5):
    """Build a space from ``euclidean:D``, ``poincare:D`` or ``cone:<base>:D``."""
    parts = spec.split(":")
    try:
        if parts[0] == "euclidean" and len(parts) == 2:
            return EuclideanSpace(int(parts[1]))
        if parts[0] == "poincare" and len(parts) == 2:
            return PoincareBall(int(parts[1]), boundary_eps=boundary_eps)
        if parts[0] == "cone" and len(parts) == 3:
            base = parse_space(":".join(parts[1:]), boundary_eps=boundary_eps)
            return MetricCone(base, beta=beta, eps=eps)
    except ValueError as exc:
        raise ValueError(f"bad space spec {spec!r}: {exc}") from None
    raise ValueError(f"bad space spec {spec!r}")
