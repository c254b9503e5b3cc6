# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the O(N*M*D) / O(N*M) inner loops.

Same contract as sepclr._kernels_np. Squared distances are accumulated
directly as sum((a-b)^2), which is non-negative by construction, so no
clamp is needed on this path.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def pairwise_sq_dists(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                acc += diff * diff
            o[i, j] = acc
    return out


def pairwise_sq_dists_backward(double[:, ::1] a, double[:, ::1] b,
                               double[:, ::1] g):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1]
    cdef cnp.ndarray[double, ndim=2] da = np.zeros((n, d), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] db = np.zeros((m, d), dtype=np.float64)
    cdef double[:, ::1] va = da
    cdef double[:, ::1] vb = db
    cdef Py_ssize_t i, j, k
    cdef double gij, t
    for i in range(n):
        for j in range(m):
            gij = 2.0 * g[i, j]
            if gij == 0.0:
                continue
            for k in range(d):
                t = gij * (a[i, k] - b[j, k])
                va[i, k] += t
                vb[j, k] -= t
    return da, db


def row_logsumexp(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double mx, acc
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        acc = 0.0
        for j in range(m):
            acc += exp(x[i, j] - mx)
        o[i] = mx + log(acc)
    return out


def row_logsumexp_backward(double[:, ::1] x, double[::1] lse, double[::1] g):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            o[i, j] = g[i] * exp(x[i, j] - lse[i])
    return out
