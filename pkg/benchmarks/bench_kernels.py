"""Time the jitted kernels against the pure-numpy reference path.

Run from the repository root:

    python benchmarks/bench_kernels.py

The active backend is whatever ``ccglearn.kernels`` selected at import time;
set ``CCGLEARN_NO_NUMBA=1`` to see the fallback timing itself (the comparison
then degenerates to numpy vs numpy).
"""

from __future__ import annotations

import time

import numpy as np

from ccglearn import kernels


def bench(label, fn, *args, repeat=200):
    fn(*args)  # warm-up (includes jit compilation on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main() -> None:
    rng = np.random.default_rng(0)
    z = rng.standard_normal((4096, 16))
    x = rng.standard_normal((4096, 64))
    g = rng.standard_normal((4096, 64))
    v = rng.standard_normal(1024)
    p = rng.standard_normal((512, 512))
    grad = rng.standard_normal((512, 512))
    m = np.zeros_like(p)
    vv = np.zeros_like(p)
    buf = np.zeros_like(p)

    cases = [
        ("softmax_rows", kernels.softmax_rows, kernels._softmax_rows_np, (z,)),
        ("leaky_relu", kernels.leaky_relu, kernels._leaky_relu_np, (x, 0.2)),
        ("leaky_relu_grad", kernels.leaky_relu_grad,
         kernels._leaky_relu_grad_np, (x, g, 0.2)),
        ("adam_update", kernels.adam_update, kernels._adam_update_np,
         (p, grad, m, vv, 2e-4, 0.5, 0.999, 1e-8, 5e-4, 1)),
        ("sgd_update", kernels.sgd_update, kernels._sgd_update_np,
         (p, grad, buf, 1e-2, 0.9, 5e-4)),
        ("simplex_project", kernels.simplex_project_kernel,
         kernels._simplex_project_np, (v,)),
    ]

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<18} {'active (us)':>12} {'numpy (us)':>12} {'speedup':>8}")
    for name, active, reference, args in cases:
        t_active = bench(name, active, *args)
        t_np = bench(name, reference, *args)
        print(f"{name:<18} {t_active * 1e6:>12.1f} {t_np * 1e6:>12.1f} "
              f"{t_np / t_active:>7.2f}x")


if __name__ == "__main__":
    main()
