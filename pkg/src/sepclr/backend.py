"""Kernel backend selection.

Two interchangeable implementations of the hot array kernels exist: a
compiled Cython extension (``sepclr._ckernels``) and a numpy fallback
(``sepclr._kernels_np``). The active binding is chosen at import time from
the environment variable ``SEPCLR_KERNEL_BACKEND``:

  auto      per-kernel best known mix: BLAS-backed numpy for the pairwise
            distance kernels, the compiled loops for log-sum-exp when the
            extension is built (see benchmarks/bench_backends.py for the
            measurements behind this split); falls back to numpy alone
  compiled  the extension for all four kernels; raise if it is not built
  numpy     the numpy implementation for all four kernels

``use()`` switches at runtime (used by the benchmark and the backend
equivalence tests).
"""

import os

from . import _kernels_np

_IMPLS = {"numpy": _kernels_np}
try:
    from . import _ckernels

    _IMPLS["compiled"] = _ckernels
except ImportError:
    _ckernels = None

_KERNELS = (
    "pairwise_sq_dists",
    "pairwise_sq_dists_backward",
    "row_logsumexp",
    "row_logsumexp_backward",
)

active_name = "numpy"
pairwise_sq_dists = _kernels_np.pairwise_sq_dists
pairwise_sq_dists_backward = _kernels_np.pairwise_sq_dists_backward
row_logsumexp = _kernels_np.row_logsumexp
row_logsumexp_backward = _kernels_np.row_logsumexp_backward


def available():
    """Names of the backends importable in this environment."""
    return sorted(_IMPLS)


def use(name):
    """Bind the kernel implementations; name is 'auto', 'compiled' or 'numpy'."""
    global active_name, pairwise_sq_dists, pairwise_sq_dists_backward
    global row_logsumexp, row_logsumexp_backward
    if name == "auto":
        lse_impl = _IMPLS.get("compiled", _kernels_np)
        pairwise_sq_dists = _kernels_np.pairwise_sq_dists
        pairwise_sq_dists_backward = _kernels_np.pairwise_sq_dists_backward
        row_logsumexp = lse_impl.row_logsumexp
        row_logsumexp_backward = lse_impl.row_logsumexp_backward
        active_name = (
            "auto(pairwise=numpy, logsumexp=compiled)"
            if lse_impl is not _kernels_np
            else "numpy"
        )
        return active_name
    if name not in _IMPLS:
        raise ValueError(
            f"kernel backend {name!r} not available; have {available()}"
        )
    impl = _IMPLS[name]
    for kernel in _KERNELS:
        globals()[kernel] = getattr(impl, kernel)
    active_name = name
    return name


use(os.environ.get("SEPCLR_KERNEL_BACKEND", "auto"))
