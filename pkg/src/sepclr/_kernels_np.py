"""Numpy implementations of the hot array kernels.

This is the fallback backend; ``sepclr._ckernels`` provides the same four
functions as a compiled extension. Both operate on float64 C-contiguous
arrays and must agree to ~1e-12.
"""

import numpy as np


def pairwise_sq_dists(a, b):
    # ||a||^2 + ||b||^2 - 2 a.b, clamped at 0: cancellation can produce
    # small negative entries for near-identical rows.
    a2 = np.einsum("ij,ij->i", a, a)
    b2 = np.einsum("ij,ij->i", b, b)
    d2 = a2[:, None] + b2[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def pairwise_sq_dists_backward(a, b, g):
    ra = g.sum(axis=1)
    rb = g.sum(axis=0)
    da = 2.0 * (ra[:, None] * a - g @ b)
    db = 2.0 * (rb[:, None] * b - g.T @ a)
    return da, db


def row_logsumexp(x):
    m = x.max(axis=1)
    out = np.log(np.exp(x - m[:, None]).sum(axis=1))
    out += m
    return out


def row_logsumexp_backward(x, lse, g):
    return np.exp(x - lse[:, None]) * g[:, None]
