"""Self-check suites behind `sepclr verify`: finite-difference gradient
checks, naive-oracle equivalence, and kernel identities. Each suite returns
(name, passed, detail) triples so the CLI can print one line per check."""

import numpy as np

from . import diffcore as dc
from . import estimators
from . import reference as ref
from .kernels import gaussian_log_kernel, pairwise_sq_dists, vmf_log_kernel

SEEDS = range(10)
ORACLE_TOL = 1e-12
GRAD_RTOL = 1e-4
GRAD_H = 1e-5
TAU = 0.5


def _unit(rows):
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _batches(seed):
    rng = np.random.default_rng(seed)
    return {
        "z": rng.uniform(-1, 1, (6, 3)),
        "c": rng.uniform(-1, 1, (6, 2)),
        "s": rng.uniform(-1, 1, (6, 2)),
        "views": [rng.uniform(-1, 1, (6, 3)) for _ in range(3)],
        "x": rng.uniform(-1, 1, (4, 2)),
        "y": rng.uniform(-1, 1, (5, 2)),
        "coord": rng.uniform(-1, 1, 6),
        "attr": rng.uniform(0, 1, 6),
        "s_prime": rng.uniform(-0.5, 0.5, 2),
    }


def suite_kernels():
    checks = []
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        a = _unit(rng.normal(size=(5, 4)))
        b = _unit(rng.normal(size=(6, 4)))
        gauss = gaussian_log_kernel(pairwise_sq_dists(a, b), TAU).values
        vmf = vmf_log_kernel(a, b, TAU).values
        diff = gauss - vmf
        var = float(diff.var())
        checks.append((f"gaussian/vmf constant-offset, seed {seed}", var < 1e-12,
                       f"variance {var:.3e}"))
    rng = np.random.default_rng(0)
    m = rng.normal(size=(7, 3))
    d2 = pairwise_sq_dists(m, m).values
    checks.append(("pairwise symmetry", bool(np.allclose(d2, d2.T, atol=1e-12)),
                   "max asym %.3e" % float(np.abs(d2 - d2.T).max())))
    checks.append(("pairwise zero diagonal", bool(np.abs(np.diag(d2)).max() < 1e-12),
                   "max |diag| %.3e" % float(np.abs(np.diag(d2)).max())))
    grid = np.linspace(0.0, 5.0, 11)[:, None]
    logk = gaussian_log_kernel(dc.constant(grid), TAU).values.ravel()
    checks.append(("gaussian log-kernel strictly decreasing",
                   bool((np.diff(logk) < 0).all()), ""))
    return checks


def suite_oracles():
    checks = []
    for seed in SEEDS:
        b = _batches(seed)
        pairs = [
            ("entropy_hat", float(estimators.entropy_hat(b["z"], TAU).values),
             ref.entropy_ref(b["z"], TAU)),
            ("uniformity_loss", float(estimators.uniformity_loss(b["z"], TAU).values),
             ref.uniformity_ref(b["z"], TAU)),
            ("alignment_loss", float(estimators.alignment_loss(b["z"], b["views"], TAU).values),
             ref.alignment_ref(b["z"], b["views"], TAU)),
            ("sprime_uniformity_loss",
             float(estimators.sprime_uniformity_loss(b["s"], b["s_prime"], TAU).values),
             ref.sprime_uniformity_ref(b["s"], b["s_prime"], TAU)),
            ("infoless_loss", float(estimators.infoless_loss(b["s"], b["s_prime"], TAU).values),
             ref.infoless_ref(b["s"], b["s_prime"], TAU)),
            ("kjem_loss", float(estimators.kjem_loss(b["c"], b["s"], TAU).values),
             ref.kjem_ref(b["c"], b["s"], TAU)),
            ("kmi_loss", float(estimators.kmi_loss(b["c"], b["s"], TAU).values),
             ref.kmi_ref(b["c"], b["s"], TAU)),
            ("mmd_loss", float(estimators.mmd_loss(b["x"], b["y"], TAU).values),
             ref.mmd_ref(b["x"], b["y"], TAU)),
            ("sup_infomax_loss",
             float(estimators.sup_infomax_loss(b["coord"], b["attr"], 0.2, TAU).values),
             ref.sup_infomax_ref(b["coord"], b["attr"], 0.2, TAU)),
        ]
        for name, got, want in pairs:
            err = abs(got - want)
            checks.append((f"{name} vs naive oracle, seed {seed}", err <= ORACLE_TOL,
                           f"|diff| {err:.3e}"))
        const = np.zeros_like(b["s"]) + 0.25
        kj = float(estimators.kjem_loss(b["c"], const, TAU).values)
        ent = float(estimators.entropy_hat(b["c"], TAU).values)
        checks.append((f"kjem factorization, seed {seed}", abs(kj + ent) <= ORACLE_TOL,
                       f"|kjem + H| {abs(kj + ent):.3e}"))
        neg_unif = -float(estimators.uniformity_loss(b["z"], TAU).values)
        checks.append((f"jensen -unif <= entropy, seed {seed}",
                       neg_unif <= ref.entropy_ref(b["z"], TAU) + 1e-12, ""))
    return checks


def _grad_cases():
    tau = TAU
    sp = np.zeros(2)

    def views_of(seed):
        return [np.random.default_rng((seed, 7, k)).uniform(-1, 1, (5, 2)) for k in range(2)]

    return [
        ("entropy_hat", (5, 2), lambda m, seed: estimators.entropy_hat(m, tau)),
        ("uniformity_loss", (5, 2), lambda m, seed: estimators.uniformity_loss(m, tau)),
        ("alignment_loss", (5, 2),
         lambda m, seed: estimators.alignment_loss(m, views_of(seed), tau)),
        ("sprime_uniformity_loss", (5, 2),
         lambda m, seed: estimators.sprime_uniformity_loss(m, sp, tau)),
        ("infoless_loss", (5, 2), lambda m, seed: estimators.infoless_loss(m, sp, tau)),
        ("kjem_loss", (5, 2),
         lambda m, seed: estimators.kjem_loss(
             m, np.random.default_rng((seed, 8)).uniform(-1, 1, (5, 2)), tau)),
        ("kmi_loss", (5, 2),
         lambda m, seed: estimators.kmi_loss(
             m, np.random.default_rng((seed, 9)).uniform(-1, 1, (5, 2)), tau)),
        ("mmd_loss", (4, 2),
         lambda m, seed: estimators.mmd_loss(
             m, np.random.default_rng((seed, 10)).uniform(-1, 1, (5, 2)), tau)),
        ("sup_infomax_loss", (6, 1),
         lambda m, seed: estimators.sup_infomax_loss(
             m, np.random.default_rng((seed, 12)).uniform(0, 1, 6), 0.2, tau)),
    ]


def suite_grads():
    checks = []
    for name, shape, make_loss in _grad_cases():
        for seed in SEEDS:
            x = np.random.default_rng((seed, 5)).uniform(-1, 1, shape)
            report = dc.check_gradients(
                lambda m: make_loss(m, seed), dc.constant(x), h=GRAD_H, rtol=GRAD_RTOL
            )
            checks.append((f"grad {name}, seed {seed}", report.passed,
                           f"max rel err {report.max_rel_error:.3e}"))
    return checks


SUITES = {
    "kernels": suite_kernels,
    "oracles": suite_oracles,
    "grads": suite_grads,
}


def run_suite(name):
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
