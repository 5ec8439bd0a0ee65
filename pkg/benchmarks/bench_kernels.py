#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure NumPy fallback.

Times the four hot kernels at the shapes the default model actually uses
(batch 32), reports speedups, and cross-checks that both backends agree
numerically. Run with:

    python3 benchmarks/bench_kernels.py [--batch N] [--repeats N]
"""

import argparse
import time

import numpy as np

from emoadapt.kernels import available_backends, get_backend


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def conv_cases(batch):
    # (label, input shape, kernel shape, padding) per the default model
    return [
        ("attn-conv1", (batch, 1, 48, 48), (4, 1, 3, 3), 1),
        ("attn-conv2", (batch, 4, 48, 48), (1, 4, 3, 3), 1),
        ("conv1", (batch, 1, 48, 48), (8, 1, 3, 3), 0),
        ("conv2", (batch, 8, 46, 46), (16, 8, 3, 3), 0),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    if len(backends) < 2:
        print("compiled backend not built; benchmarking the NumPy fallback only")

    rng = np.random.default_rng(0)
    rows = []
    for label, xs, ks, pad in conv_cases(args.batch):
        x = rng.standard_normal(xs).astype(np.float32)
        k = rng.standard_normal(ks).astype(np.float32)
        per_backend = {}
        for name in backends:
            be = get_backend(name)
            out = be.conv2d_forward(x, k, pad)
            g = np.ones_like(out)
            per_backend[name] = (
                time_call(lambda: be.conv2d_forward(x, k, pad), args.repeats),
                time_call(lambda: be.conv2d_backward(x, k, pad, g), args.repeats),
                out,
            )
        rows.append((label, per_backend))

    # pooling at the post-conv2 shape
    xp = rng.standard_normal((args.batch, 16, 44, 44)).astype(np.float32)
    pool_times = {}
    for name in backends:
        be = get_backend(name)
        out, idx = be.maxpool2d_forward(xp)
        g = np.ones_like(out)
        pool_times[name] = (
            time_call(lambda: be.maxpool2d_forward(xp), args.repeats),
            time_call(lambda: be.maxpool2d_backward(idx, g), args.repeats),
        )

    header = f"{'kernel':<12}" + "".join(
        f"{name + ' fwd':>14}{name + ' bwd':>14}" for name in backends
    )
    if len(backends) == 2:
        header += f"{'speedup fwd':>13}{'speedup bwd':>13}{'max |diff|':>12}"
    print(header)
    print("-" * len(header))
    for label, per_backend in rows:
        line = f"{label:<12}"
        for name in backends:
            tf, tb, _ = per_backend[name]
            line += f"{tf * 1e3:>11.2f} ms{tb * 1e3:>11.2f} ms"
        if len(backends) == 2:
            (cf, cb, cout), (pf, pb, pout) = (
                per_backend[backends[0]], per_backend[backends[1]],
            )
            diff = float(np.abs(cout - pout).max())
            line += f"{pf / cf:>12.2f}x{pb / cb:>12.2f}x{diff:>12.2e}"
        print(line)
    line = f"{'maxpool2d':<12}"
    for name in backends:
        tf, tb = pool_times[name]
        line += f"{tf * 1e3:>11.2f} ms{tb * 1e3:>11.2f} ms"
    if len(backends) == 2:
        (cf, cb), (pf, pb) = pool_times[backends[0]], pool_times[backends[1]]
        line += f"{pf / cf:>12.2f}x{pb / cb:>12.2f}x{'--':>12}"
    print(line)


if __name__ == "__main__":
    main()
