import numpy as np
import pytest

from sepclr import diffcore as dc
from sepclr import estimators as est
from sepclr import losses

from conftest import seeded_batch, unit_rows_np

TAU = 0.5


def make_batch(seed=0, n=12, d_c=3, d_s=2, with_attrs=False, requires_grad=False):
    rng = np.random.default_rng(seed)
    half = n // 2
    build = dc.parameter if requires_grad else dc.constant
    batch = losses.BatchEmbeddings(
        c_anchor=build(unit_rows_np(rng.normal(size=(n, d_c)))),
        c_view=build(unit_rows_np(rng.normal(size=(n, d_c)))),
        s_anchor=build(rng.normal(size=(n, d_s))),
        s_view=build(rng.normal(size=(n, d_s))),
        n_background=half,
        s_prime=est.NullVector.zeros(d_s),
        attributes=rng.uniform(0, 1, (half, d_s)) if with_attrs else None,
    )
    return batch


def test_weights_validation():
    with pytest.raises(losses.LossConfigError):
        losses.LossWeights(lambda_c=-1.0)
    with pytest.raises(losses.LossConfigError):
        losses.LossWeights(tau=0.0)
    with pytest.raises(losses.LossConfigError):
        losses.LossWeights(independence_mode="tc")
    w = losses.LossWeights()
    assert (w.lambda_c, w.lambda_s, w.beta, w.lambda_ind) == (1.0, 1000.0, 1000.0, 10.0)
    assert w.tau == 0.5


def test_total_is_documented_weighted_sum():
    batch = make_batch(1)
    w = losses.LossWeights(lambda_c=2.0, lambda_s=30.0, beta=7.0, lambda_ind=5.0)
    bundle = losses.total_loss(batch, w)
    expected = (
        2.0 * (float(bundle.align.values) + float(bundle.unif.values))
        + 30.0 * (float(bundle.y_align.values) + float(bundle.sprime_unif.values))
        + 7.0 * float(bundle.infoless.values)
        + 5.0 * float(bundle.independence.values)
    )
    assert abs(float(bundle.total.values) - expected) <= 1e-12


def test_all_weights_zero_total_zero():
    batch = make_batch(2)
    w = losses.LossWeights(lambda_c=0.0, lambda_s=0.0, beta=0.0, lambda_ind=0.0)
    bundle = losses.total_loss(batch, w)
    assert float(bundle.total.values) == 0.0


def test_linearity_doubling_lambda_c():
    batch = make_batch(3)
    w1 = losses.LossWeights(lambda_c=1.0, lambda_s=0.0, beta=0.0, lambda_ind=0.0)
    w2 = losses.LossWeights(lambda_c=2.0, lambda_s=0.0, beta=0.0, lambda_ind=0.0)
    t1 = float(losses.total_loss(make_batch(3), w1).total.values)
    t2 = float(losses.total_loss(batch, w2).total.values)
    assert abs(t2 - 2.0 * t1) <= 1e-12


def test_common_loss_collapse_detector():
    n = 8
    z = np.tile(unit_rows_np(np.ones((1, 3))), (n, 1))
    batch_z = dc.constant(z)
    align, unif = losses.common_loss(batch_z, [batch_z], losses.LossWeights())
    assert abs(float(align.values)) <= 1e-12
    assert abs(float(unif.values)) <= 1e-12  # collapse: uniformity at its maximum


def test_salient_loss_degenerate_everything_at_null():
    s = np.zeros((6, 2))
    y_align, sprime_unif, infoless = losses.salient_loss(
        dc.constant(s), [dc.constant(s)], dc.constant(s), est.NullVector.zeros(2),
        losses.LossWeights(),
    )
    assert abs(float(y_align.values)) <= 1e-12
    assert abs(float(infoless.values)) <= 1e-12
    assert abs(float(sprime_unif.values) - np.log(1.5)) <= 1e-12


def test_independence_dispatch_matches_estimators():
    rng = np.random.default_rng(4)
    c = rng.normal(size=(8, 3))
    s = rng.normal(size=(8, 2))
    origin = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    w = losses.LossWeights()
    kj = losses.independence_loss(c, s, w.with_(independence_mode="kjem"), origin)
    assert abs(float(kj.values) - float(est.kjem_loss(c, s, TAU).values)) <= 1e-12
    km = losses.independence_loss(c, s, w.with_(independence_mode="kmi"), origin)
    assert abs(float(km.values) - float(est.kmi_loss(c, s, TAU).values)) <= 1e-12
    none = losses.independence_loss(c, s, w.with_(independence_mode="none"), origin)
    assert float(none.values) == 0.0
    md = losses.independence_loss(c, s, w.with_(independence_mode="mmd"), origin)
    assert abs(
        float(md.values) - float(est.mmd_loss(c[:4], c[4:], TAU).values)
    ) <= 1e-12


def test_independence_mmd_identical_halves_zero():
    c = np.tile(seeded_batch(5, (4, 3)), (2, 1))
    origin = np.array([0] * 4 + [1] * 4)
    w = losses.LossWeights(independence_mode="mmd")
    assert float(losses.independence_loss(c, c, w, origin).values) == 0.0


def test_attribute_mode_requires_attributes_and_dims():
    batch = make_batch(6, with_attrs=False)
    with pytest.raises(losses.LossConfigError):
        losses.total_loss(batch, losses.LossWeights(), mode="attribute_supervised")
    batch = make_batch(7, d_s=3, with_attrs=True)
    bad = losses.BatchEmbeddings(
        c_anchor=batch.c_anchor,
        c_view=batch.c_view,
        s_anchor=batch.s_anchor,
        s_view=batch.s_view,
        n_background=batch.n_background,
        s_prime=batch.s_prime,
        attributes=batch.attributes[:, :2],  # D_S=2 but salient dim is 3
    )
    with pytest.raises(losses.LossConfigError):
        losses.total_loss(bad, losses.LossWeights(), mode="attribute_supervised")


def test_attribute_mode_replaces_salient_block():
    batch = make_batch(8, d_s=2, with_attrs=True)
    w = losses.LossWeights(lambda_c=0.0, beta=0.0, lambda_ind=0.0)
    bundle = losses.total_loss(batch, w, mode="attribute_supervised")
    assert len(bundle.sup_terms) == 2
    expected = np.mean([float(t.values) for t in bundle.sup_terms])
    assert abs(float(bundle.total.values) - expected) <= 1e-12
    # unsupervised block retained only when configured
    w_keep = w.with_(attr_keep_unsupervised=True, lambda_s=3.0)
    bundle2 = losses.total_loss(make_batch(8, d_s=2, with_attrs=True), w_keep,
                                mode="attribute_supervised")
    expected2 = expected + 3.0 * (
        float(bundle2.y_align.values) + float(bundle2.sprime_unif.values)
    )
    assert abs(float(bundle2.total.values) - expected2) <= 1e-12


def test_unknown_mode_rejected():
    with pytest.raises(losses.LossConfigError):
        losses.total_loss(make_batch(9), losses.LossWeights(), mode="semi")


def _grads_of(params, batch, weights, mode="unsupervised"):
    for p in params:
        p.zero_grad()
    with dc.Tape():
        bundle = losses.total_loss(batch, weights, mode)
        dc.backward(bundle.total)
    return [None if p.grad is None else p.grad.copy() for p in params]


def test_gradient_flow_separation():
    # common embeddings must receive no gradient from the salient block and
    # vice versa; both receive independence gradients
    w_full = losses.LossWeights(lambda_c=1.0, lambda_s=5.0, beta=3.0, lambda_ind=0.0)
    w_no_salient = w_full.with_(lambda_s=0.0, beta=0.0)
    batch_a = make_batch(10, requires_grad=True)
    ga = _grads_of([batch_a.c_anchor, batch_a.c_view], batch_a, w_full)
    batch_b = make_batch(10, requires_grad=True)
    gb = _grads_of([batch_b.c_anchor, batch_b.c_view], batch_b, w_no_salient)
    for x, y in zip(ga, gb):
        np.testing.assert_array_equal(x, y)

    w_no_common = w_full.with_(lambda_c=0.0)
    batch_c = make_batch(10, requires_grad=True)
    gc = _grads_of([batch_c.s_anchor, batch_c.s_view], batch_c, w_full)
    batch_d = make_batch(10, requires_grad=True)
    gd = _grads_of([batch_d.s_anchor, batch_d.s_view], batch_d, w_no_common)
    for x, y in zip(gc, gd):
        np.testing.assert_array_equal(x, y)

    # independence reaches both sides
    w_ind = losses.LossWeights(lambda_c=0.0, lambda_s=0.0, beta=0.0, lambda_ind=1.0)
    batch_e = make_batch(10, requires_grad=True)
    ge = _grads_of([batch_e.c_anchor, batch_e.s_anchor], batch_e, w_ind)
    assert any(g is not None and np.abs(g).max() > 0 for g in ge[:1])
    assert any(g is not None and np.abs(g).max() > 0 for g in ge[1:])


def test_total_finite_for_extreme_embeddings():
    rng = np.random.default_rng(11)
    batch = losses.BatchEmbeddings(
        c_anchor=dc.constant(unit_rows_np(rng.normal(size=(8, 3)))),
        c_view=dc.constant(unit_rows_np(rng.normal(size=(8, 3)))),
        s_anchor=dc.constant(rng.normal(size=(8, 2)) * 1e4),
        s_view=dc.constant(rng.normal(size=(8, 2)) * 1e4),
        n_background=4,
        s_prime=est.NullVector.zeros(2),
    )
    bundle = losses.total_loss(batch, losses.LossWeights())
    assert np.isfinite(float(bundle.total.values))
    for name in bundle.COMPONENTS:
        assert np.isfinite(float(getattr(bundle, name).values)), name


def test_bundle_as_floats_roundtrip():
    bundle = losses.total_loss(make_batch(12), losses.LossWeights())
    row = bundle.as_floats()
    assert set(row) == {"align", "unif", "y_align", "sprime_unif", "infoless",
                        "independence", "total"}
    assert all(np.isfinite(v) for v in row.values())
