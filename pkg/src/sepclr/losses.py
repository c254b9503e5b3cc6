"""Compose the estimators into the training objectives.

Sign table (all terms minimized; weights multiply the raw components):

    component     estimator                     weight
    align         alignment over all samples    lambda_c
    unif          uniformity over all samples   lambda_c
    y_align       alignment over targets only   lambda_s
    sprime_unif   salient uniformity w.r.t. s'  lambda_s
    infoless      background pull to s'         beta
    independence  kjem | kmi | mmd | none       lambda_ind
    sup_terms     per-attribute supervised      1/D_S each (attribute mode)

In attribute-supervised mode the lambda_s block is replaced by the averaged
supervised terms while infoless and independence are retained; the salient
space must then have exactly one dimension per attribute.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import diffcore as dc
from . import estimators as est

INDEPENDENCE_MODES = ("kjem", "kmi", "mmd", "none")
MODES = ("unsupervised", "attribute_supervised")

# weight used for the MMD arm when the config does not set one explicitly
MMD_DEFAULT_WEIGHT = 50.0


class LossConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_c: float = 1.0
    lambda_s: float = 1000.0
    beta: float = 1000.0
    lambda_ind: float = 10.0
    tau: float = 0.5
    sigma_attr: float = 0.2
    independence_mode: str = "kjem"
    # adds the unsupervised salient block back on top of the supervised one
    attr_keep_unsupervised: bool = False

    def __post_init__(self):
        for name in ("lambda_c", "lambda_s", "beta", "lambda_ind"):
            if getattr(self, name) < 0:
                raise LossConfigError(f"{name} must be >= 0")
        if not self.tau > 0:
            raise LossConfigError("tau must be positive")
        if not self.sigma_attr > 0:
            raise LossConfigError("sigma_attr must be positive")
        if self.independence_mode not in INDEPENDENCE_MODES:
            raise LossConfigError(
                f"independence_mode must be one of {INDEPENDENCE_MODES}"
            )

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class LossBundle:
    align: dc.DiffArray
    unif: dc.DiffArray
    y_align: dc.DiffArray
    sprime_unif: dc.DiffArray
    infoless: dc.DiffArray
    independence: dc.DiffArray
    total: dc.DiffArray
    sup_terms: tuple = ()

    COMPONENTS = ("align", "unif", "y_align", "sprime_unif", "infoless", "independence")

    def as_floats(self):
        row = {name: float(getattr(self, name).values) for name in self.COMPONENTS}
        for d, term in enumerate(self.sup_terms):
            row[f"sup_{d}"] = float(term.values)
        row["total"] = float(self.total.values)
        return row


@dataclass
class BatchEmbeddings:
    """Projection-space embeddings of one balanced batch (anchors + 1 view).

    Rows are ordered background first, then target; `n_background` splits
    them. All four matrices are row-aligned with each other.
    """

    c_anchor: dc.DiffArray
    c_view: dc.DiffArray
    s_anchor: dc.DiffArray
    s_view: dc.DiffArray
    n_background: int
    s_prime: est.NullVector
    attributes: np.ndarray | None = None  # target rows only, (N_Y, D_S)

    @property
    def n(self):
        return self.c_anchor.shape[0]

    def target_rows(self):
        return np.arange(self.n_background, self.n)

    def background_rows(self):
        return np.arange(self.n_background)


def common_loss(c_all, c_views, weights):
    """Alignment + uniformity over every sample (background and target)."""
    align = est.alignment_loss(c_all, c_views, weights.tau)
    unif = est.uniformity_loss(c_all, weights.tau)
    return align, unif


def salient_loss(s_target, s_target_views, s_background, s_prime, weights):
    """Target-only alignment, s'-uniformity, and the background infoless pull."""
    y_align = est.alignment_loss(s_target, s_target_views, weights.tau)
    sprime_unif = est.sprime_uniformity_loss(s_target, s_prime, weights.tau)
    infoless = est.infoless_loss(s_background, s_prime, weights.tau)
    return y_align, sprime_unif, infoless


def independence_loss(c, s, weights, origin=None):
    """Dispatch on the configured independence regularizer."""
    mode = weights.independence_mode
    if mode == "none":
        return dc.constant(0.0)
    if mode == "kjem":
        return est.kjem_loss(c, s, weights.tau)
    if mode == "kmi":
        return est.kmi_loss(c, s, weights.tau)
    if mode == "mmd":
        if origin is None:
            raise LossConfigError("mmd independence needs per-row origins")
        origin = np.asarray(origin)
        c = est._matrix(c)
        c_x = dc.take_rows(c, np.flatnonzero(origin == est.BACKGROUND))
        c_y = dc.take_rows(c, np.flatnonzero(origin == est.TARGET))
        return est.mmd_loss(c_x, c_y, weights.tau)
    raise LossConfigError(f"unknown independence mode {mode!r}")


def _sup_terms(s_tg, attributes, weights):
    d_s = attributes.shape[1]
    if s_tg.shape[1] != d_s:
        raise LossConfigError(
            f"attribute mode needs salient dim == {d_s} (one per attribute), "
            f"got {s_tg.shape[1]}"
        )
    n = s_tg.shape[0]
    s_cols = dc.transpose(s_tg)  # (D_S, N)
    terms = []
    for d in range(d_s):
        a_d = attributes[:, d]
        # one bandwidth knob across attributes with heterogeneous units:
        # scale by the attribute's spread
        spread = float(a_d.std())
        sigma = weights.sigma_attr * (spread if spread > 0 else 1.0)
        coord = dc.reshape(dc.take_rows(s_cols, np.array([d])), (n,))
        terms.append(est.sup_infomax_loss(coord, a_d, sigma, weights.tau))
    return terms


def total_loss(batch, weights, mode="unsupervised", kde_views="anchor"):
    """Weighted objective over one batch; returns every component and the total.

    kde_views picks the sample set for the resubstitution estimators
    (uniformity, s'-uniformity, infoless, joint entropy): 'anchor' (default)
    draws one view per sample, 'both' adds the positive views too. The
    default keeps same-sample view pairs out of the repulsion sums, where
    they directly fight the alignment term.
    """
    if mode not in MODES:
        raise LossConfigError(f"mode must be one of {MODES}")
    if kde_views not in ("both", "anchor"):
        raise LossConfigError(f"kde_views must be 'both' or 'anchor'")
    tg = batch.target_rows()
    bg = batch.background_rows()
    if len(tg) == 0 or len(bg) == 0:
        raise LossConfigError("batch must contain both origins")

    if kde_views == "both":
        c_all = dc.concat_rows(batch.c_anchor, batch.c_view)
        s_all = dc.concat_rows(batch.s_anchor, batch.s_view)
        tg_all = np.concatenate([tg, tg + batch.n])
        bg_all = np.concatenate([bg, bg + batch.n])
    else:
        c_all, s_all = batch.c_anchor, batch.s_anchor
        tg_all, bg_all = tg, bg

    align = est.alignment_loss(batch.c_anchor, [batch.c_view], weights.tau)
    unif = est.uniformity_loss(c_all, weights.tau)

    s_tg = dc.take_rows(s_all, tg_all)
    s_bg = dc.take_rows(s_all, bg_all)
    y_align = est.alignment_loss(
        dc.take_rows(batch.s_anchor, tg), [dc.take_rows(batch.s_view, tg)], weights.tau
    )
    sprime_unif = est.sprime_uniformity_loss(s_tg, batch.s_prime, weights.tau)
    infoless = est.infoless_loss(s_bg, batch.s_prime, weights.tau)

    origin = np.zeros(c_all.shape[0], dtype=int)
    origin[tg_all] = est.TARGET
    independence = independence_loss(c_all, s_all, weights, origin=origin)

    total = dc.add(
        dc.scalar_mul(dc.add(align, unif), weights.lambda_c),
        dc.scalar_mul(independence, weights.lambda_ind),
    )
    total = dc.add(total, dc.scalar_mul(infoless, weights.beta))

    sup_terms = ()
    if mode == "attribute_supervised":
        if batch.attributes is None:
            raise LossConfigError("attribute_supervised mode needs attributes")
        attrs = batch.attributes
        if kde_views == "both":
            attrs = np.concatenate([attrs, attrs])  # same attribute per view
        sup_terms = tuple(_sup_terms(s_tg, attrs, weights))
        sup_avg = sup_terms[0]
        for term in sup_terms[1:]:
            sup_avg = dc.add(sup_avg, term)
        total = dc.add(total, dc.scalar_mul(sup_avg, 1.0 / len(sup_terms)))
        if weights.attr_keep_unsupervised:
            total = dc.add(
                total,
                dc.scalar_mul(dc.add(y_align, sprime_unif), weights.lambda_s),
            )
    else:
        total = dc.add(
            total, dc.scalar_mul(dc.add(y_align, sprime_unif), weights.lambda_s)
        )

    return LossBundle(
        align=align,
        unif=unif,
        y_align=y_align,
        sprime_unif=sprime_unif,
        infoless=infoless,
        independence=independence,
        total=total,
        sup_terms=sup_terms,
    )
