"""Benchmark the compiled kernel core against the numpy fallback.

Times the four hot kernels on KDE-typical shapes, then one full composed
loss forward+backward per backend. Run from the repo root:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np

from sepclr import backend
from sepclr import diffcore as dc
from sepclr import estimators as est


def _time(fn, *args, repeats=30):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def bench_kernels(n, m, d, rng):
    a = rng.standard_normal((n, d))
    b = rng.standard_normal((m, d))
    g = rng.standard_normal((n, m))
    x = rng.standard_normal((n, m))
    rows = {}
    for name in backend.available():
        backend.use(name)
        lse = backend.row_logsumexp(x)
        rows[name] = {
            "pairwise fwd": _time(backend.pairwise_sq_dists, a, b),
            "pairwise bwd": _time(backend.pairwise_sq_dists_backward, a, b, g),
            "logsumexp fwd": _time(backend.row_logsumexp, x),
            "logsumexp bwd": _time(backend.row_logsumexp_backward, x, lse, np.ones(n)),
        }
    return rows


def bench_loss(n, d, rng):
    c = rng.standard_normal((n, d))
    s = rng.standard_normal((n, d))

    def run():
        leaf = dc.parameter(c)
        with dc.Tape():
            loss = est.kjem_loss(leaf, dc.constant(s), 0.5)
            dc.backward(loss)

    rows = {}
    for name in backend.available():
        backend.use(name)
        rows[name] = {"kjem fwd+bwd": _time(run, repeats=10)}
    return rows


def main():
    rng = np.random.default_rng(0)
    names = backend.available()
    if len(names) < 2:
        print(f"only the {names[0]} backend is available; timings below are single-backend")
    print(f"{'kernel':<16} {'shape':<18}" + "".join(f"{n:>12}" for n in names))
    for n, m, d in [(128, 128, 32), (256, 256, 32), (512, 512, 32), (256, 256, 128)]:
        rows = bench_kernels(n, m, d, rng)
        for kernel in next(iter(rows.values())):
            cells = "".join(f"{rows[nm][kernel] * 1e3:>10.3f}ms" for nm in names)
            print(f"{kernel:<16} {f'{n}x{m}x{d}':<18}{cells}")
    for n, d in [(256, 32)]:
        rows = bench_loss(n, d, rng)
        for kernel in next(iter(rows.values())):
            cells = "".join(f"{rows[nm][kernel] * 1e3:>10.3f}ms" for nm in names)
            print(f"{kernel:<16} {f'{n}x{d}':<18}{cells}")
    backend.use("auto")
    print(f"\nactive backend after auto-select: {backend.active_name}")


if __name__ == "__main__":
    main()
