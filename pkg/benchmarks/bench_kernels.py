"""Convolution kernel timings: compiled extension vs numpy fallback.

Times the three kernel entry points (forward, input gradient, weight
gradient) at the shapes the network actually runs: the shallow encoder
over a full 448x448 frame and the reconstructor over a 32x32 patch.
Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from egmt.numerics import kernels_numpy

try:
    from egmt.numerics import _convkernels
except ImportError:
    _convkernels = None

# (label, x shape, w shape)
SHAPES = [
    ("encoder 448", (1, 448, 448), (16, 1, 3, 3)),
    ("encoder 32", (1, 32, 32), (16, 1, 3, 3)),
    ("deep 448", (16, 448, 448), (32, 16, 3, 3)),
    ("recon 32", (64, 32, 32), (32, 64, 3, 3)),
]


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(impl, x, w, g, stride=1):
    fwd = best_of(lambda: impl.conv2d_forward(x, w, stride))
    bwd_in = best_of(lambda: impl.conv2d_backward_input(g, w, x.shape, stride))
    bwd_w = best_of(lambda: impl.conv2d_backward_weight(g, x, w.shape, stride))
    return fwd, bwd_in, bwd_w


def main():
    if _convkernels is None:
        print("compiled extension not built; showing numpy timings only")
    header = f"{'shape':<14} {'pass':<10} {'numpy':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    rng = np.random.default_rng(0)
    for label, xs, ws in SHAPES:
        x = rng.standard_normal(xs)
        w = rng.standard_normal(ws)
        g = np.ascontiguousarray(kernels_numpy.conv2d_forward(x, w, 1))
        x = np.ascontiguousarray(x)
        w = np.ascontiguousarray(w)
        np_times = bench(kernels_numpy, x, w, g)
        c_times = bench(_convkernels, x, w, g) if _convkernels else (None,) * 3
        for name, tn, tc in zip(("forward", "grad in", "grad w"), np_times, c_times):
            if tc is None:
                print(f"{label:<14} {name:<10} {tn * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
            else:
                print(
                    f"{label:<14} {name:<10} {tn * 1e3:>8.2f}ms {tc * 1e3:>8.2f}ms "
                    f"{tn / tc:>7.1f}x"
                )


if __name__ == "__main__":
    main()
