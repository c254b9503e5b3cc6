"""Kernel-density plug-in estimators: entropy, alignment, joint entropy,
MMD and attribute-supervised similarity losses.

Conventions shared by every estimator here:
  * all losses are MINIMIZED;
  * Gaussian log-kernels use exponent -d^2/(2 tau), except the salient
    uniformity closed form which uses -d^2/tau (its derivation keeps the
    doubled exponent after the balanced-batch simplification);
  * self-pairs are included in resubstitution sums unless exclude_self is
    set;
  * additive constants are dropped consistently, so composite identities
    (e.g. constant salient batch => joint term equals the negated common
    entropy) hold exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .kernels import UNIT_NORM_ATOL, _tau

COMMON_SPHERE = "common_sphere"
SALIENT_EUCLIDEAN = "salient_euclidean"
BACKGROUND, TARGET = 0, 1

_MASK_NEG = -1e30  # added to masked log-kernel entries; exp() underflows to exactly 0


class EstimatorError(ValueError):
    pass


@dataclass
class EmbeddingBatch:
    """N x D latent matrix plus its space tag and per-row origin."""

    z: dc.DiffArray
    space: str = SALIENT_EUCLIDEAN
    origin: np.ndarray | None = None

    def __post_init__(self):
        self.z = dc.as_diff(self.z)
        if self.z.values.ndim != 2:
            raise EstimatorError(f"embedding batch must be 2-D, got {self.z.shape}")
        if self.space not in (COMMON_SPHERE, SALIENT_EUCLIDEAN):
            raise EstimatorError(f"unknown space {self.space!r}")
        if self.space == COMMON_SPHERE:
            norms = np.sqrt(np.einsum("ij,ij->i", self.z.values, self.z.values))
            bad = np.abs(norms - 1.0) > UNIT_NORM_ATOL
            if bad.any():
                i = int(np.argmax(bad))
                raise EstimatorError(
                    f"common-space row {i} has norm {norms[i]:.8f}, expected 1"
                )
        if self.origin is not None:
            self.origin = np.asarray(self.origin)
            if self.origin.shape != (self.z.shape[0],):
                raise EstimatorError("origin length must match batch rows")

    @property
    def n(self):
        return self.z.shape[0]


@dataclass
class NullVector:
    """The information-less salient anchor s'; fixed for a training run."""

    values: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros(dim))


def _matrix(z):
    if isinstance(z, EmbeddingBatch):
        return z.z
    return dc.as_diff(z)


def _column(z):
    m = _matrix(z)
    if m.values.ndim == 1:
        return dc.reshape(m, (m.shape[0], 1))
    return m


def _null(s_prime, dim):
    v = s_prime.values if isinstance(s_prime, NullVector) else np.asarray(s_prime, dtype=np.float64).ravel()
    if v.shape != (dim,):
        raise EstimatorError(f"null vector has dim {v.shape[0]}, batch has {dim}")
    return v


def _self_mask(n):
    m = np.zeros((n, n))
    np.fill_diagonal(m, _MASK_NEG)
    return m


def _lse_all(v):
    """log-sum-exp of a length-N vector, as a scalar."""
    n = v.shape[0]
    return dc.reshape(dc.row_logsumexp(dc.reshape(v, (1, n))), ())


def entropy_hat(z, tau, exclude_self=False):
    """Resubstitution KDE entropy estimate (constant log sqrt(2 pi tau) dropped)."""
    z = _matrix(z)
    n = z.shape[0]
    if n < 2:
        raise EstimatorError(f"entropy estimate needs N >= 2, got {n}")
    t = _tau(tau)
    scores = dc.scalar_mul(dc.pairwise_sq_dists(z, z), -0.5 / t)
    count = n
    if exclude_self:
        scores = dc.add(scores, dc.constant(_self_mask(n)))
        count = n - 1
    lse = dc.row_logsumexp(scores)
    return dc.add_scalar(dc.scalar_mul(dc.mean_all(lse), -1.0), math.log(count))


def uniformity_loss(z, tau, exclude_self=False):
    """Jensen lower-bound counterpart of entropy_hat: log of the mean kernel.

    Minimizing it spreads the batch; -uniformity_loss <= entropy_hat always.
    """
    z = _matrix(z)
    n = z.shape[0]
    if n < 2:
        raise EstimatorError(f"uniformity needs N >= 2, got {n}")
    t = _tau(tau)
    scores = dc.scalar_mul(dc.pairwise_sq_dists(z, z), -0.5 / t)
    pairs = n * n
    if exclude_self:
        scores = dc.add(scores, dc.constant(_self_mask(n)))
        pairs = n * (n - 1)
    return dc.add_scalar(_lse_all(dc.row_logsumexp(scores)), -math.log(pairs))


def alignment_loss(z, views, tau):
    """Multi-view alignment: -mean_i log mean_k kernel(z_i, z_i^k).

    For a single view this reduces to the mean squared distance over 2 tau.
    """
    z = _matrix(z)
    if isinstance(views, (dc.DiffArray, np.ndarray)) and not isinstance(views, (list, tuple)):
        arr = views.values if isinstance(views, dc.DiffArray) else np.asarray(views)
        views = [views] if arr.ndim == 2 else list(views)
    views = [_matrix(v) for v in views]
    k = len(views)
    if k == 0:
        raise EstimatorError("alignment needs at least one view (K >= 1)")
    t = _tau(tau)
    cols = [
        dc.scalar_mul(dc.row_sq_norms(dc.sub(z, v)), -0.5 / t) for v in views
    ]
    lse = dc.row_logsumexp(dc.stack_cols(cols))
    return dc.add_scalar(dc.scalar_mul(dc.mean_all(lse), -1.0), math.log(k))


def sprime_uniformity_loss(s_target, s_prime, tau):
    """Salient uniformity under the information-less hypothesis.

    Closed form for balanced batches: the kernel mass at each target is the
    kernel to s' plus half the mean kernel to the other targets, both with
    exponent -d^2/tau. Minimizing repels targets from s' and each other.
    """
    s = _matrix(s_target)
    n = s.shape[0]
    if n == 0:
        raise EstimatorError("empty target batch")
    t = _tau(tau)
    sp = _null(s_prime, s.shape[1])
    to_null = dc.scalar_mul(dc.row_sq_norms(dc.sub(s, dc.constant(sp))), -1.0 / t)
    pair_scores = dc.scalar_mul(dc.pairwise_sq_dists(s, s), -1.0 / t)
    pair_term = dc.add_scalar(dc.row_logsumexp(pair_scores), -math.log(2.0 * n))
    per_row = dc.row_logsumexp(dc.stack_cols([to_null, pair_term]))
    return dc.add_scalar(_lse_all(per_row), -math.log(n))


def infoless_loss(s_background, s_prime, tau):
    """Mean squared distance of background salient codes to s', over 2 tau."""
    s = _matrix(s_background)
    if s.shape[0] == 0:
        raise EstimatorError("empty background batch")
    t = _tau(tau)
    sp = _null(s_prime, s.shape[1])
    return dc.scalar_mul(
        dc.mean_all(dc.row_sq_norms(dc.sub(s, dc.constant(sp)))), 0.5 / t
    )


def kjem_loss(c, s, tau, exclude_self=False):
    """Negated joint-entropy estimate over row-aligned (c_i, s_i) pairs.

    The joint kernel is the product of the two Gaussian kernels, i.e. the
    sum of the two log-kernels. Minimizing maximizes H(c, s).
    """
    c, s = _matrix(c), _matrix(s)
    if c.shape[0] != s.shape[0]:
        raise EstimatorError(
            f"row-count mismatch: common {c.shape[0]} vs salient {s.shape[0]}"
        )
    n = c.shape[0]
    if n < 2:
        raise EstimatorError(f"joint entropy needs N >= 2, got {n}")
    t = _tau(tau)
    scores = dc.add(
        dc.scalar_mul(dc.pairwise_sq_dists(c, c), -0.5 / t),
        dc.scalar_mul(dc.pairwise_sq_dists(s, s), -0.5 / t),
    )
    count = n
    if exclude_self:
        scores = dc.add(scores, dc.constant(_self_mask(n)))
        count = n - 1
    return dc.add_scalar(dc.mean_all(dc.row_logsumexp(scores)), -math.log(count))


def kmi_loss(c, s, tau):
    """Plug-in mutual information H(c) + H(s) - H(c, s); ablation baseline."""
    return dc.add(
        dc.add(entropy_hat(c, tau), entropy_hat(s, tau)), kjem_loss(c, s, tau)
    )


def mmd_loss(c_x, c_y, tau):
    """Biased V-statistic squared MMD with the Gaussian kernel; >= 0."""
    x, y = _matrix(c_x), _matrix(c_y)
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise EstimatorError("mmd needs non-empty inputs")
    t = _tau(tau)

    def mean_kernel(a, b):
        return dc.mean_all(dc.exp(dc.scalar_mul(dc.pairwise_sq_dists(a, b), -0.5 / t)))

    return dc.sub(
        dc.add(mean_kernel(x, x), mean_kernel(y, y)),
        dc.scalar_mul(mean_kernel(x, y), 2.0),
    )


def attribute_weights(a_d, sigma):
    """Row-normalised Gaussian similarity of a scalar attribute; rows sum to 1."""
    if not sigma > 0:
        raise EstimatorError(f"sigma must be positive, got {sigma}")
    a = np.asarray(a_d, dtype=np.float64).ravel()
    d2 = (a[:, None] - a[None, :]) ** 2
    k = np.exp(-d2 / (2.0 * sigma * sigma))
    return k / k.sum(axis=1, keepdims=True)


def sup_alignment_out(s_d, weights, tau):
    """Attribute-weighted alignment, positives summed outside the log."""
    col = _column(s_d)
    n = col.shape[0]
    t = _tau(tau)
    d2 = dc.pairwise_sq_dists(col, col)
    return dc.scalar_mul(dc.sum_all(dc.mul(d2, dc.constant(weights))), 0.5 / (t * n))


def sup_alignment_in(s_d, weights, tau):
    """Attribute-weighted alignment with positives inside the log (upper route)."""
    col = _column(s_d)
    t = _tau(tau)
    scores = dc.add(
        dc.scalar_mul(dc.pairwise_sq_dists(col, col), -0.5 / t),
        dc.constant(np.log(weights)),
    )
    return dc.scalar_mul(dc.mean_all(dc.row_logsumexp(scores)), -1.0)


def sup_infomax_loss(s_d, a_d, sigma, tau, form="out"):
    """Supervised alignment + uniformity for one salient coordinate.

    The default 'out' form sums positives outside the log, which upper
    bounds the 'in' form (Jensen) and is the one optimized in training.
    """
    col = _column(s_d)
    a = np.asarray(a_d, dtype=np.float64).ravel()
    if a.shape[0] != col.shape[0]:
        raise EstimatorError(
            f"length mismatch: {col.shape[0]} coordinates vs {a.shape[0]} attributes"
        )
    w = attribute_weights(a, sigma)
    if form == "out":
        align = sup_alignment_out(col, w, tau)
    elif form == "in":
        align = sup_alignment_in(col, w, tau)
    else:
        raise EstimatorError(f"unknown form {form!r}")
    return dc.add(align, uniformity_loss(col, tau))
