# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos, exp, log, log1p, M_PI

cnp.import_array()


def pairwise_euclidean(X):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], dim = x.shape[1], i, j, k
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double acc, diff
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(dim):
                    diff = x[i, k] - x[j, k]
                    acc = acc + diff * diff
                out[i, j] = sqrt(acc)
                out[j, i] = out[i, j]
    return out_arr


def pairwise_poincare(X):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], dim = x.shape[1], i, j, k
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    alpha_arr = 1.0 - np.sum(np.asarray(x) ** 2, axis=1)
    cdef double[::1] alpha = alpha_arr
    cdef double acc, diff, z
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(dim):
                    diff = x[i, k] - x[j, k]
                    acc = acc + diff * diff
                z = 2.0 * acc / (alpha[i] * alpha[j])
                out[i, j] = log1p(z + sqrt(z * (z + 2.0)))
                out[j, i] = out[i, j]
    return out_arr


def lift_epoch(double[::1] heights, const double[:, ::1] dist,
               const cnp.int64_t[::1] us, const cnp.int64_t[::1] vs,
               const cnp.int64_t[:, ::1] negs,
               double beta, double lr, double eps, Py_ssize_t batch_size):
    cdef Py_ssize_t n = heights.shape[0], n_edges = us.shape[0]
    cdef Py_ssize_t k1 = negs.shape[1] + 1
    cdef Py_ssize_t start, stop, e, j, node, u
    cdef double b2 = beta * beta, total = 0.0
    cdef double s, t, theta, sh, q, dmin, zsum, acc, c, cos_t
    grad_arr = np.zeros(n, dtype=np.float64)
    touched_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] grad = grad_arr
    cdef unsigned char[::1] touched = touched_arr
    d_arr = np.empty((batch_size, k1), dtype=np.float64)
    c_arr = np.empty((batch_size, k1), dtype=np.float64)
    cth_arr = np.empty((batch_size, k1), dtype=np.float64)
    cdef double[:, ::1] d = d_arr
    cdef double[:, ::1] coef = c_arr
    cdef double[:, ::1] cth = cth_arr

    with nogil:
        start = 0
        while start < n_edges:
            stop = start + batch_size
            if stop > n_edges:
                stop = n_edges
            # distances and softmax weights, all taken before the update
            for e in range(start, stop):
                u = us[e]
                s = heights[u]
                dmin = 0.0
                for j in range(k1):
                    node = vs[e] if j == 0 else negs[e, j - 1]
                    t = heights[node]
                    theta = dist[u, node] / beta
                    if theta > 1.0:
                        theta = 1.0
                    theta = M_PI * theta
                    sh = sin(0.5 * theta)
                    q = (s - t) * (s - t) + 4.0 * s * t * sh * sh
                    d[e - start, j] = beta * sqrt(q)
                    cth[e - start, j] = cos(theta)
                    if j == 0 or d[e - start, j] < dmin:
                        dmin = d[e - start, j]
                zsum = 0.0
                for j in range(k1):
                    coef[e - start, j] = exp(dmin - d[e - start, j])
                    zsum = zsum + coef[e - start, j]
                total = total + (d[e - start, 0] - dmin + log(zsum))
                for j in range(k1):
                    coef[e - start, j] = -coef[e - start, j] / zsum
                coef[e - start, 0] = coef[e - start, 0] + 1.0
            # gradient accumulation: anchor terms first, then targets
            for e in range(start, stop):
                u = us[e]
                s = heights[u]
                acc = 0.0
                for j in range(k1):
                    node = vs[e] if j == 0 else negs[e, j - 1]
                    t = heights[node]
                    if d[e - start, j] > 0:
                        acc = acc + coef[e - start, j] * (b2 * (s - t * cth[e - start, j]) / d[e - start, j])
                grad[u] = grad[u] + acc
                touched[u] = 1
            for e in range(start, stop):
                u = us[e]
                s = heights[u]
                for j in range(k1):
                    node = vs[e] if j == 0 else negs[e, j - 1]
                    t = heights[node]
                    if d[e - start, j] > 0:
                        grad[node] = grad[node] + coef[e - start, j] * (b2 * (t - s * cth[e - start, j]) / d[e - start, j])
                    touched[node] = 1
            for node in range(n):
                if touched[node]:
                    t = heights[node] - lr * grad[node] / b2
                    if t < eps:
                        t = eps
                    elif t > 1.0 - eps:
                        t = 1.0 - eps
                    heights[node] = t
                    grad[node] = 0.0
                    touched[node] = 0
            start = stop
    return total
