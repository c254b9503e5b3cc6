import numpy as np
import pytest

from sepclr import backend
from sepclr import diffcore as dc
from sepclr import estimators as est

pytestmark = pytest.mark.skipif(
    "compiled" not in backend.available(),
    reason="compiled kernel extension not built",
)


@pytest.fixture(autouse=True)
def restore_backend():
    yield
    backend.use("auto")


def _with(name, fn):
    backend.use(name)
    try:
        return fn()
    finally:
        backend.use("auto")


@pytest.mark.parametrize("seed", range(5))
def test_pairwise_forward_agrees(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(17, 9))
    b = rng.normal(size=(13, 9))
    out_c = _with("compiled", lambda: backend.pairwise_sq_dists(a, b))
    out_n = _with("numpy", lambda: backend.pairwise_sq_dists(a, b))
    np.testing.assert_allclose(out_c, out_n, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_pairwise_backward_agrees(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(8, 5))
    b = rng.normal(size=(7, 5))
    g = rng.normal(size=(8, 7))
    da_c, db_c = _with("compiled", lambda: backend.pairwise_sq_dists_backward(a, b, g))
    da_n, db_n = _with("numpy", lambda: backend.pairwise_sq_dists_backward(a, b, g))
    np.testing.assert_allclose(da_c, da_n, atol=1e-12)
    np.testing.assert_allclose(db_c, db_n, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_logsumexp_agrees(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(11, 6)) * 50  # exercise the max shift
    lse_c = _with("compiled", lambda: backend.row_logsumexp(x))
    lse_n = _with("numpy", lambda: backend.row_logsumexp(x))
    np.testing.assert_allclose(lse_c, lse_n, atol=1e-12)
    g = rng.normal(size=11)
    bwd_c = _with("compiled", lambda: backend.row_logsumexp_backward(x, lse_c, g))
    bwd_n = _with("numpy", lambda: backend.row_logsumexp_backward(x, lse_n, g))
    np.testing.assert_allclose(bwd_c, bwd_n, atol=1e-12)


@pytest.mark.parametrize("name", ["compiled", "numpy"])
def test_gradcheck_passes_on_both_backends(name):
    backend.use(name)
    x = np.random.default_rng(3).uniform(-1, 1, (5, 3))
    report = dc.check_gradients(
        lambda m: est.entropy_hat(m, 0.5), dc.constant(x), h=1e-5, rtol=1e-4
    )
    assert report.passed


@pytest.mark.parametrize("name", ["compiled", "numpy"])
def test_composed_loss_identical_across_backends(name):
    rng = np.random.default_rng(4)
    c = rng.normal(size=(10, 4))
    s = rng.normal(size=(10, 3))
    backend.use(name)
    value = float(est.kjem_loss(c, s, 0.5).values)
    backend.use("numpy")
    reference = float(est.kjem_loss(c, s, 0.5).values)
    assert value == pytest.approx(reference, abs=1e-12)


def test_use_rejects_unknown_backend():
    with pytest.raises(ValueError):
        backend.use("gpu")


def test_auto_mixes_kernels_when_extension_present():
    name = backend.use("auto")
    assert "numpy" in name  # pairwise stays on the BLAS path
