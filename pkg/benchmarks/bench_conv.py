#!/usr/bin/env python3
"""Benchmark the bank-convolution paths: compiled direct core, pure-NumPy
direct fallback, and the FFT path.

The work column is n_frames*n_mels*n_time*n_freq*n_filters (direct-path
multiply-accumulates); the crossover printed at the end is where the
fastest direct core stops beating the FFT path, which is how
strfconv.DIRECT_FFT_CROSSOVER was chosen.

Run:  python benchmarks/bench_conv.py [--repeats 3]
"""

import argparse
import time

import numpy as np

from strfkit import _convpure
from strfkit._convdispatch import USING_COMPILED
from strfkit._fftconv import conv_same
from strfkit.gaborkit import GaborParams, KernelGrid, gabor_kernel

try:
    from strfkit import _convcore
except ImportError:
    _convcore = None

CASES = [
    # (n_frames, n_mels, grid_time, grid_freq, n_filters)
    (20, 16, 11, 5, 2),
    (50, 32, 11, 9, 4),
    (50, 64, 31, 9, 8),
    (100, 64, 61, 9, 8),
    (100, 64, 111, 9, 8),
    (200, 64, 111, 9, 16),
    (300, 64, 111, 9, 16),
]


def bench(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"compiled extension available: {_convcore is not None} "
          f"(dispatch uses compiled: {USING_COMPILED})")
    header = f"{'case':>22} {'work':>12} {'direct-cy':>10} {'direct-py':>10} {'fft':>10}"
    print(header)
    print("-" * len(header))
    crossover = None
    for T, M, n_time, n_freq, N in CASES:
        grid = KernelGrid(n_time, n_freq)
        bank = [
            GaborParams(
                rng.uniform(1, 15), rng.uniform(0.5, 2),
                rng.uniform(0, 0.7), rng.uniform(-np.pi, np.pi),
            )
            for _ in range(N)
        ]
        kernels = np.stack([gabor_kernel(p, grid) for p in bank])
        Y = rng.standard_normal((T, M))
        ht, hf = grid.half_time, grid.half_freq
        ypad = np.zeros((T + 2 * ht, M + 2 * hf))
        ypad[ht : ht + T, hf : hf + M] = Y
        work = T * M * n_time * n_freq * N

        times = {}
        if _convcore is not None:
            times["cy"] = bench(
                lambda: _convcore.direct_conv_bank(ypad, kernels, T, M), args.repeats
            )
        times["py"] = bench(
            lambda: _convpure.direct_conv_bank(ypad, kernels, T, M), args.repeats
        )
        times["fft"] = bench(lambda: conv_same(Y, kernels), args.repeats)
        cy = f"{times['cy']*1e3:9.2f}ms" if "cy" in times else "       n/a"
        print(
            f"{T}x{M} k{n_time}x{n_freq} N{N:<3}".rjust(22)
            + f" {work:>12,d} {cy} {times['py']*1e3:9.2f}ms {times['fft']*1e3:9.2f}ms"
        )
        best_direct = min(times.get("cy", np.inf), times["py"])
        if crossover is None and best_direct > times["fft"]:
            crossover = work
    if crossover is not None:
        print(f"\nfirst case where FFT wins: work ~ {crossover:.1e}")
    else:
        print("\ndirect path won every case; raise the case sizes to find the crossover")


if __name__ == "__main__":
    main()
