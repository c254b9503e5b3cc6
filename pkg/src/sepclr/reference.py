"""Naive double-loop reference implementations of every estimator.

These exist to cross-check the tape-composed estimators and are written to
be obviously correct rather than fast: plain python loops, math.exp and
math.log on python floats, no shared code with diffcore or the kernel
backends. `sepclr verify --suite oracles` and the test suite compare both
routes to 1e-12 on small batches.
"""

import math

import numpy as np


def _rows(z):
    return [list(map(float, r)) for r in np.asarray(z, dtype=np.float64)]


def _sqdist(a, b):
    return sum((x - y) ** 2 for x, y in zip(a, b))


def entropy_ref(z, tau, exclude_self=False):
    rows = _rows(z)
    n = len(rows)
    total = 0.0
    for i in range(n):
        acc = 0.0
        count = 0
        for j in range(n):
            if exclude_self and i == j:
                continue
            acc += math.exp(-_sqdist(rows[i], rows[j]) / (2.0 * tau))
            count += 1
        total += math.log(acc / count)
    return -total / n


def uniformity_ref(z, tau):
    rows = _rows(z)
    n = len(rows)
    acc = 0.0
    for i in range(n):
        for j in range(n):
            acc += math.exp(-_sqdist(rows[i], rows[j]) / (2.0 * tau))
    return math.log(acc / (n * n))


def alignment_ref(z, views, tau):
    rows = _rows(z)
    view_rows = [_rows(v) for v in views]
    n = len(rows)
    k = len(view_rows)
    total = 0.0
    for i in range(n):
        acc = 0.0
        for vk in view_rows:
            acc += math.exp(-_sqdist(rows[i], vk[i]) / (2.0 * tau))
        total += math.log(acc / k)
    return -total / n


def sprime_uniformity_ref(s, s_prime, tau):
    rows = _rows(s)
    sp = list(map(float, np.asarray(s_prime, dtype=np.float64)))
    n = len(rows)
    acc = 0.0
    for i in range(n):
        inner = 0.0
        for j in range(n):
            inner += math.exp(-_sqdist(rows[i], rows[j]) / tau)
        acc += math.exp(-_sqdist(rows[i], sp) / tau) + inner / (2.0 * n)
    return math.log(acc / n)


def infoless_ref(s, s_prime, tau):
    rows = _rows(s)
    sp = list(map(float, np.asarray(s_prime, dtype=np.float64)))
    return sum(_sqdist(r, sp) for r in rows) / (2.0 * tau * len(rows))


def kjem_ref(c, s, tau):
    c_rows = _rows(c)
    s_rows = _rows(s)
    n = len(c_rows)
    total = 0.0
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += math.exp(
                -(_sqdist(c_rows[i], c_rows[j]) + _sqdist(s_rows[i], s_rows[j]))
                / (2.0 * tau)
            )
        total += math.log(acc / n)
    return total / n


def kmi_ref(c, s, tau):
    return entropy_ref(c, tau) + entropy_ref(s, tau) + kjem_ref(c, s, tau)


def mmd_ref(x, y, tau):
    def mean_kernel(a, b):
        acc = 0.0
        for ra in a:
            for rb in b:
                acc += math.exp(-_sqdist(ra, rb) / (2.0 * tau))
        return acc / (len(a) * len(b))

    xr, yr = _rows(x), _rows(y)
    return mean_kernel(xr, xr) + mean_kernel(yr, yr) - 2.0 * mean_kernel(xr, yr)


def attribute_weights_ref(a, sigma):
    vals = list(map(float, np.asarray(a, dtype=np.float64)))
    n = len(vals)
    w = [[math.exp(-((vals[i] - vals[j]) ** 2) / (2.0 * sigma * sigma)) for j in range(n)] for i in range(n)]
    return np.array([[w[i][j] / sum(w[i]) for j in range(n)] for i in range(n)])


def sup_alignment_out_ref(s_d, weights, tau):
    vals = list(map(float, np.asarray(s_d, dtype=np.float64).ravel()))
    n = len(vals)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += weights[i][j] * (vals[i] - vals[j]) ** 2 / (2.0 * tau)
    return total / n


def sup_alignment_in_ref(s_d, weights, tau):
    vals = list(map(float, np.asarray(s_d, dtype=np.float64).ravel()))
    n = len(vals)
    total = 0.0
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += weights[i][j] * math.exp(-((vals[i] - vals[j]) ** 2) / (2.0 * tau))
        total += math.log(acc)
    return -total / n


def sup_infomax_ref(s_d, a_d, sigma, tau):
    w = attribute_weights_ref(a_d, sigma)
    col = np.asarray(s_d, dtype=np.float64).reshape(-1, 1)
    return sup_alignment_out_ref(s_d, w, tau) + uniformity_ref(col, tau)
