#!/usr/bin/env python3
"""Compare the numba and pure-numpy kernel backends on training workloads.

The training inner loop (masked forward + reverse-mode gradients over a
minibatch) dominates fit_network runtime. Run:

    python benchmarks/kernel_benchmark.py

SYMNET_NO_NUMBA=1 switches the library itself to the numpy path; this script
always times both implementations side by side.
"""

import time

import numpy as np

import symnet.kernels as K
from symnet.netcore import random_structure
from symnet.train import _pack_params, init_params, pack_structure


def time_fn(fn, args, warmup=3, iters=200):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(iters):
        fn(*args)
    return (time.perf_counter() - t0) / iters * 1e6  # microseconds


def main():
    rng = np.random.default_rng(0)
    print(f"selected backend: {K.BACKEND}")
    print()
    print(f"{'L':>2} {'m':>2} {'batch':>5} | {'numba us':>9} {'numpy us':>9} {'speedup':>7}")
    print("-" * 44)
    for L, m, batch in [(1, 2, 64), (2, 3, 64), (3, 3, 64), (3, 5, 64), (4, 5, 64), (3, 5, 256)]:
        s = random_structure(L, m, 3, rng)
        p = init_params(s, rng)
        net = pack_structure(s)
        W, B = _pack_params(net, p)
        X = rng.uniform(-1, 1, (batch, 3))
        y = rng.uniform(-1, 1, batch)
        args = (net.widths, net.ops, W, B, net.Mw, net.Mb, X, y, 1e-4, 100.0, 1e-8, True, True)
        t_fast = time_fn(K.loss_and_grad, args)
        t_np = time_fn(K.loss_and_grad_numpy, args)
        print(f"{L:>2} {m:>2} {batch:>5} | {t_fast:>9.1f} {t_np:>9.1f} {t_np / t_fast:>6.1f}x")
    print()
    print("loss_and_grad = one minibatch forward + backward pass")


if __name__ == "__main__":
    main()
