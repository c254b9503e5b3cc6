"""Pairwise kernel evaluations shared by every estimator.

Both kernels are returned in log-space and combined downstream with
log-sum-exp; normalisation constants (log sqrt(2*pi*tau), the vMF constant
C(kappa)) are dropped throughout because they never affect gradients and
cancel in every composite identity. On unit-norm inputs the two kernels
differ by the constant 1/tau:

    -||a - b||^2 / (2 tau) = (a . b) / tau - 1 / tau
"""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc

UNIT_NORM_ATOL = 1e-6


@dataclass(frozen=True)
class Bandwidth:
    """Gaussian variance scale; the matching vMF concentration is 1/tau."""

    tau: float = 0.5

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def kappa(self):
        return 1.0 / self.tau


class NonUnitRowError(ValueError):
    def __init__(self, which, index, norm):
        super().__init__(
            f"{which} row {index} has norm {norm:.8f}, expected 1 within {UNIT_NORM_ATOL}"
        )
        self.index = index


def _tau(tau):
    return tau.tau if isinstance(tau, Bandwidth) else float(tau)


def pairwise_sq_dists(a, b):
    """Matrix of ||A_i - B_j||^2, differentiable, entries >= 0."""
    return dc.pairwise_sq_dists(a, b)


def gaussian_log_kernel(d2, tau):
    """log of the Gaussian kernel on precomputed squared distances: -d2/(2 tau)."""
    return dc.scalar_mul(d2, -0.5 / _tau(tau))


def _require_unit_rows(m, which):
    values = m.values if isinstance(m, dc.DiffArray) else np.asarray(m, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", values, values))
    bad = np.abs(norms - 1.0) > UNIT_NORM_ATOL
    if bad.any():
        i = int(np.argmax(bad))
        raise NonUnitRowError(which, i, float(norms[i]))


def vmf_log_kernel(a, b, tau):
    """log of the von Mises-Fisher kernel (A_i . B_j) / tau for unit rows."""
    _require_unit_rows(a, "A")
    _require_unit_rows(b, "B")
    return dc.scalar_mul(dc.matmul(dc.as_diff(a), dc.transpose(dc.as_diff(b))), 1.0 / _tau(tau))
