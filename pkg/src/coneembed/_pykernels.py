"""Pure numpy implementations of the hot kernels.

Mirrors ``_ckernels.pyx`` call for call; used when the compiled extension is
unavailable or ``CONE_EMBED_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np


def pairwise_euclidean(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    sq = np.sum(X * X, axis=1)
    gram = X @ X.T
    d2 = sq[:, None] + sq[None, :] - 2.0 * gram
    # the gram trick loses precision for near points; recompute those exactly
    np.maximum(d2, 0.0, out=d2)
    out = np.sqrt(d2)
    close = out < 1e-4 * (1.0 + np.sqrt(sq[:, None] + sq[None, :]))
    if close.any():
        i, j = np.nonzero(close)
        out[i, j] = np.sqrt(np.sum((X[i] - X[j]) ** 2, axis=1))
    np.fill_diagonal(out, 0.0)
    return out


def pairwise_poincare(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = len(X)
    alpha = 1.0 - np.sum(X * X, axis=1)
    out = np.empty((n, n))
    for i in range(n):
        sq = np.sum((X - X[i]) ** 2, axis=1)
        z = 2.0 * sq / (alpha[i] * alpha)
        out[i] = np.log1p(z + np.sqrt(z * (z + 2.0)))
    np.fill_diagonal(out, 0.0)
    return out


def lift_epoch(heights, dist, us, vs, negs, beta, lr, eps, batch_size):
    """One epoch of height-only SGD against a cached base distance matrix.

    Updates ``heights`` in place and returns the summed negative
    log-likelihood of the epoch's edges (each evaluated before its batch
    update).
    """
    b2 = beta * beta
    total = 0.0
    n_edges = len(us)
    for start in range(0, n_edges, batch_size):
        u = us[start:start + batch_size]
        targets = np.concatenate([vs[start:start + batch_size, None], negs[start:start + batch_size]], axis=1)
        dz = dist[u[:, None], targets]
        s = heights[u][:, None]
        t = heights[targets]
        theta = math.pi * np.minimum(dz / beta, 1.0)
        sh = np.sin(0.5 * theta)
        q = (s - t) ** 2 + 4.0 * s * t * sh * sh
        d = beta * np.sqrt(q)
        m = np.min(d, axis=1, keepdims=True)
        w = np.exp(m - d)
        z = np.sum(w, axis=1, keepdims=True)
        total += float(np.sum(d[:, 0] - m[:, 0] + np.log(z[:, 0])))
        coef = -w / z
        coef[:, 0] += 1.0
        cos_t = np.cos(theta)
        pos = d > 0
        dds = np.zeros_like(d)
        ddt = np.zeros_like(d)
        np.divide(b2 * (s - t * cos_t), d, out=dds, where=pos)
        np.divide(b2 * (t - s * cos_t), d, out=ddt, where=pos)
        grad = np.zeros_like(heights)
        np.add.at(grad, u, np.sum(coef * dds, axis=1))
        np.add.at(grad, targets.ravel(), (coef * ddt).ravel())
        touched = np.unique(np.concatenate([u, targets.ravel()]))
        heights[touched] = np.clip(heights[touched] - lr * grad[touched] / b2, eps, 1.0 - eps)
    return total
