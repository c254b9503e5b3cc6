"""Deterministic training loop with an adaptive-moment optimizer.

Every step draws a balanced batch (equal background/target halves, a
requirement of the salient-uniformity closed form), builds one positive
view per sample (K=1), runs both encoders on all views, backpropagates the
composed objective and applies an Adam update. Identical config and seed
reproduce the run bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .datagen import BACKGROUND, TARGET, default_augmentations, make_views
from .estimators import NullVector
from .losses import BatchEmbeddings, LossWeights, total_loss


class TrainConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, step, components):
        breakdown = ", ".join(f"{k}={v:.6g}" for k, v in components.items())
        super().__init__(f"non-finite loss at step {step}: {breakdown}")
        self.step = step
        self.components = components


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 5e-4
    weights: LossWeights = field(default_factory=LossWeights)
    mode: str = "unsupervised"
    seed: int = 0
    eval_every: int = 0  # epochs between mid-run evaluations, 0 = end only

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise TrainConfigError("batch_size must be even (balanced halves)")
        if not self.learning_rate > 0:
            raise TrainConfigError("learning_rate must be positive")
        if self.seed < 0:
            raise TrainConfigError("seed must be non-negative")
        if self.mode not in ("unsupervised", "attribute_supervised"):
            raise TrainConfigError(f"unknown mode {self.mode!r}")


class Adam:
    """Adaptive moment estimation; decay rates 0.9/0.999, epsilon 1e-8."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else 0.0
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p.values -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def _gather_views(dataset, indices, spec, seed_tuple):
    anchors = np.empty((len(indices), dataset.input_dim))
    positives = np.empty_like(anchors)
    for row, idx in enumerate(indices):
        a, b = make_views(dataset.sample(int(idx)), spec, 2, seed_tuple)
        anchors[row] = a
        positives[row] = b
    return anchors, positives


def train(dataset, enc, cfg, augmentations=None, on_epoch_end=None):
    """Optimize the encoder pair on a dataset; returns (enc, history).

    history holds one dict per step with every loss component. on_epoch_end,
    when given, is called with (epoch, enc) after each epoch whose index
    matches cfg.eval_every.
    """
    if cfg.mode == "attribute_supervised" and dataset.attributes is None:
        raise TrainConfigError("attribute_supervised mode needs a dataset with attributes")
    bg = dataset.indices(BACKGROUND)
    tg = dataset.indices(TARGET)
    if len(bg) == 0 or len(tg) == 0:
        raise TrainConfigError("dataset must contain both origins")
    spec = augmentations if augmentations is not None else default_augmentations(dataset.kind)
    half = cfg.batch_size // 2
    steps_per_epoch = min(len(bg), len(tg)) // half
    if steps_per_epoch == 0:
        raise TrainConfigError("batch_size larger than the smaller origin")

    s_prime = NullVector.zeros(enc.salient_dim)
    optimizer = Adam(enc.params(), cfg.learning_rate)
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 11, epoch)))
        bg_order = bg[shuffle_rng.permutation(len(bg))]
        tg_order = tg[shuffle_rng.permutation(len(tg))]
        for b in range(steps_per_epoch):
            batch_idx = np.concatenate([
                bg_order[b * half:(b + 1) * half],
                tg_order[b * half:(b + 1) * half],
            ])
            anchors, positives = _gather_views(dataset, batch_idx, spec, (cfg.seed, 21, step))
            stacked = np.concatenate([anchors, positives])
            n = len(batch_idx)
            attrs = None
            if cfg.mode == "attribute_supervised":
                attrs = dataset.attributes[batch_idx[half:]]
            with dc.Tape():
                _, c_proj, _, s_proj = enc.forward(dc.constant(stacked), train=True)
                batch = BatchEmbeddings(
                    c_anchor=dc.take_rows(c_proj, np.arange(n)),
                    c_view=dc.take_rows(c_proj, np.arange(n, 2 * n)),
                    s_anchor=dc.take_rows(s_proj, np.arange(n)),
                    s_view=dc.take_rows(s_proj, np.arange(n, 2 * n)),
                    n_background=half,
                    s_prime=s_prime,
                    attributes=attrs,
                )
                bundle = total_loss(batch, cfg.weights, cfg.mode)
                row = bundle.as_floats()
                if not all(np.isfinite(v) for v in row.values()):
                    raise DivergenceError(step, row)
                dc.backward(bundle.total)
            optimizer.step()
            optimizer.zero_grad()
            row.update(step=step, epoch=epoch)
            history.append(row)
            step += 1
        if on_epoch_end is not None and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            on_epoch_end(epoch, enc)
    return enc, history


def history_to_csv(history, path):
    import csv

    keys = ["step", "epoch"] + [k for k in history[0] if k not in ("step", "epoch")]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(history)
