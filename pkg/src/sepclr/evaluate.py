"""Probe-based evaluation: linear/logistic probes per (factor, space),
balanced accuracy / MAE / R^2, the total separation gap, and the mutual
information gap for attribute-supervised runs.

Probes are fit on a seeded 75/25 split of encoder representations taken
before the projection head (post-head available via space="proj"). The
logistic probe is multinomial with L2 penalty 1e-3, full-batch gradient
descent with a Lipschitz step size, stopped at gradient norm 1e-6 or 500
iterations; the ridge probe is the closed form with alpha 1e-3. Features
are standardized on the train split first.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

TRAIN_FRACTION = 0.75
LOGISTIC_PENALTY = 1e-3
RIDGE_ALPHA = 1e-3
GRAD_TOL = 1e-6
MAX_ITERS = 500


class ProbeError(ValueError):
    pass


def _split(n, seed):
    order = np.random.default_rng(np.random.SeedSequence((seed, 41))).permutation(n)
    cut = int(round(TRAIN_FRACTION * n))
    return order[:cut], order[cut:]


def _standardize(train, test):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (train - mu) / sd, (test - mu) / sd


def balanced_accuracy(y_true, y_pred):
    """Unweighted mean of per-class recalls over classes present in y_true."""
    recalls = []
    for cls in np.unique(y_true):
        hit = y_true == cls
        recalls.append(np.mean(y_pred[hit] == cls))
    return float(np.mean(recalls))


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _fit_logistic(x_train, y_train):
    classes, codes = np.unique(y_train, return_inverse=True)
    if len(classes) < 2:
        raise ProbeError("logistic probe needs at least 2 classes")
    n, d = x_train.shape
    X = np.concatenate([np.ones((n, 1)), x_train], axis=1)
    C = len(classes)
    onehot = np.eye(C)[codes]
    W = np.zeros((d + 1, C))
    # softmax CE hessian spectral norm <= 0.5 sigma_max(X)^2 / n (+ penalty)
    sigma_sq = float(np.linalg.eigvalsh(X.T @ X)[-1])
    step = 1.0 / (0.5 * sigma_sq / n + LOGISTIC_PENALTY)
    penalty_mask = np.ones((d + 1, 1))
    penalty_mask[0] = 0.0  # intercept unpenalized
    for _ in range(MAX_ITERS):
        probs = _softmax(X @ W)
        grad = X.T @ (probs - onehot) / n + LOGISTIC_PENALTY * (W * penalty_mask)
        if np.linalg.norm(grad) <= GRAD_TOL:
            break
        W -= step * grad
    return classes, W


def _predict_logistic(classes, W, x):
    X = np.concatenate([np.ones((len(x), 1)), x], axis=1)
    return classes[np.argmax(X @ W, axis=1)]


def _fit_ridge(x_train, y_train):
    n, d = x_train.shape
    X = np.concatenate([np.ones((n, 1)), x_train], axis=1)
    reg = RIDGE_ALPHA * np.eye(d + 1)
    reg[0, 0] = 0.0  # intercept unpenalized
    return np.linalg.solve(X.T @ X + n * reg, X.T @ y_train)


@dataclass
class ProbeResult:
    kind: str
    metrics: dict
    n_train: int
    n_test: int


def fit_probe(z, labels, kind, seed=0):
    """Fit one probe on a 75/25 seeded split; metrics come from the held-out part."""
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if kind not in ("logistic", "ridge"):
        raise ProbeError(f"unknown probe kind {kind!r}")
    train_idx, test_idx = _split(len(z), seed)
    x_train, x_test = _standardize(z[train_idx], z[test_idx])
    y_train, y_test = labels[train_idx], labels[test_idx]
    if kind == "logistic":
        classes, W = _fit_logistic(x_train, y_train)
        pred = _predict_logistic(classes, W, x_test)
        metrics = {"b_acc": balanced_accuracy(y_test, pred)}
    else:
        w = _fit_ridge(x_train, y_train)
        pred = np.concatenate([np.ones((len(x_test), 1)), x_test], axis=1) @ w
        resid = y_test - pred
        ss_tot = np.sum((y_test - y_test.mean()) ** 2)
        r2 = 1.0 - float(np.sum(resid**2) / ss_tot) if ss_tot > 0 else 0.0
        metrics = {"mae": float(np.mean(np.abs(resid))), "r2": r2}
    return ProbeResult(kind=kind, metrics=metrics,
                       n_train=len(train_idx), n_test=len(test_idx))


@dataclass
class ProbeRow:
    factor: str
    space: str
    metric: str
    value: float
    expected_best: float
    in_delta: bool = True


@dataclass
class ProbeReport:
    rows: list
    delta_tot: float
    mig_per_attribute: dict | None = None
    mig_average: float | None = None
    extra: dict = field(default_factory=dict)

    def cell(self, factor, space, metric=None):
        for row in self.rows:
            if row.factor == factor and row.space == space and (
                metric is None or row.metric == metric
            ):
                return row
        raise KeyError((factor, space, metric))

    def to_json(self, path=None):
        doc = {
            "rows": [vars(r) for r in self.rows],
            "delta_tot": self.delta_tot,
            "mig_per_attribute": self.mig_per_attribute,
            "mig_average": self.mig_average,
            "extra": self.extra,
        }
        text = json.dumps(doc, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["factor", "space", "metric", "value", "expected_best", "in_delta"])
            for r in self.rows:
                writer.writerow([r.factor, r.space, r.metric, repr(r.value),
                                 repr(r.expected_best), int(r.in_delta)])

    def format_table(self):
        """Two columns per factor (S and C with their expected directions),
        achieved row above the best-expected row, gaps summed on the right."""
        factors = []
        for r in self.rows:
            if r.in_delta and r.factor not in factors:
                factors.append(r.factor)
        headers, achieved, best = [], [], []
        for f in factors:
            s_row = self.cell(f, "salient")
            c_row = self.cell(f, "common")
            up_s = "^" if s_row.expected_best > 0.5 else "v"
            up_c = "^" if c_row.expected_best > 0.5 else "v"
            headers += [f"{f}:S {up_s}", f"{f}:C {up_c}"]
            achieved += [100 * s_row.value, 100 * c_row.value]
            best += [100 * s_row.expected_best, 100 * c_row.expected_best]
        widths = [max(len(h), 7) for h in headers]
        lines = [
            "  ".join(h.rjust(w) for h, w in zip(headers, widths)) + "  delta_tot",
            "  ".join(f"{v:{w}.1f}" for v, w in zip(achieved, widths))
            + f"  {100 * self.delta_tot:9.1f}",
            "  ".join(f"{v:{w}.1f}" for v, w in zip(best, widths)) + f"  {0.0:9.1f}",
        ]
        if self.mig_average is not None:
            lines.append(f"MIG average: {self.mig_average:.3f}")
        return "\n".join(lines)


def evaluate(enc, dataset, factors=None, space="repr", seed=0):
    """Fit a probe per (factor, latent space) and assemble the report.

    Expected-best per cell: 1.0 when the factor belongs in that space
    (salient factor in S, common factor in C), chance (1/#classes, or 0 R^2)
    when it does not; delta_tot sums the absolute gaps.
    """
    if space not in ("repr", "proj"):
        raise ProbeError("space must be 'repr' or 'proj'")
    names = list(factors) if factors is not None else sorted(dataset.factors)
    for name in names:
        if name not in dataset.factors:
            raise ProbeError(f"dataset has no factor {name!r}")
    embeds = enc.embed(dataset.inputs)
    feats = {
        "common": embeds["c_repr" if space == "repr" else "c_proj"],
        "salient": embeds["s_repr" if space == "repr" else "s_proj"],
    }
    rows = []
    delta = 0.0
    for name in names:
        values = dataset.factors[name]
        valid = ~np.isnan(values)
        kind = dataset.factor_kinds[name]
        role = dataset.factor_roles[name]
        y = values[valid]
        for space_name in ("common", "salient"):
            z = feats[space_name][valid]
            belongs = (role == "common") == (space_name == "common")
            if kind == "categorical":
                result = fit_probe(z, y, "logistic", seed=seed)
                chance = 1.0 / len(np.unique(y))
                value = result.metrics["b_acc"]
                expected = 1.0 if belongs else chance
                rows.append(ProbeRow(name, space_name, "b_acc", value, expected))
                delta += abs(value - expected)
            else:
                result = fit_probe(z, y, "ridge", seed=seed)
                value = result.metrics["r2"]
                expected = 1.0 if belongs else 0.0
                rows.append(ProbeRow(name, space_name, "r2", value, expected))
                rows.append(ProbeRow(name, space_name, "mae",
                                     result.metrics["mae"], math.nan, in_delta=False))
                delta += abs(value - expected)
    return ProbeReport(rows=rows, delta_tot=delta)


# ---------------------------------------------------------------------------
# mutual information gap

def _equal_freq_bins(values, bins):
    edges = np.quantile(values, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    return np.searchsorted(edges, values, side="right")


def _discrete_mi(xb, yb, bins):
    counts = np.zeros((bins, bins))
    np.add.at(counts, (xb, yb), 1.0)
    p = counts / counts.sum()
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / (px @ py)[mask])))


def _discrete_entropy(xb, bins):
    counts = np.bincount(xb, minlength=bins).astype(np.float64)
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def mig_score(s, attributes, bins=20):
    """Mutual information gap per attribute plus the average.

    Each latent dimension and each attribute is discretized into
    equal-frequency bins; MI comes from the contingency table; the gap is
    the lead of the best latent dimension over the runner-up, normalized by
    the attribute entropy.
    """
    s = np.asarray(s, dtype=np.float64)
    attributes = np.asarray(attributes, dtype=np.float64)
    if s.shape[0] != attributes.shape[0]:
        raise ProbeError(
            f"row mismatch: {s.shape[0]} latents vs {attributes.shape[0]} attribute rows"
        )
    s_bins = [_equal_freq_bins(s[:, j], bins) for j in range(s.shape[1])]
    per_dim = []
    for d in range(attributes.shape[1]):
        a_bins = _equal_freq_bins(attributes[:, d], bins)
        h = _discrete_entropy(a_bins, bins)
        if h <= 0:
            per_dim.append(0.0)
            continue
        mis = sorted((_discrete_mi(sb, a_bins, bins) for sb in s_bins), reverse=True)
        runner_up = mis[1] if len(mis) > 1 else 0.0
        per_dim.append((mis[0] - runner_up) / h)
    return per_dim, float(np.mean(per_dim))
