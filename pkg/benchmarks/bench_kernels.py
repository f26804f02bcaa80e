"""Time the jitted kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Sizes mirror the default training configuration (96-step windows, a handful
of channels), so the ratios reflect what training actually sees.
"""

import argparse
import time

import numpy as np

from tprnn.kernels import numba_backend, numpy_backend


def _time(fn, *args, repeats=200):
    fn(*args)  # warm (JIT compile on the numba side)
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def build_cases(rng):
    length, d, h = 96, 7, 16
    x = rng.standard_normal((length, d))
    g = rng.standard_normal((length // 2, d))
    kern = rng.standard_normal((2, d))
    cases = [
        ("conv1d_fwd", (x, kern, 2)),
        ("conv1d_bwd", (g, x, kern, 2)),
        ("pool_max_fwd", (x, 2, 2)),
        ("pool_avg_fwd", (x, 2, 2)),
    ]
    for kind, gates in (("rnn_tanh", 1), ("lstm", 4), ("gru", 3)):
        wx = rng.standard_normal((d, gates * h))
        wh = rng.standard_normal((h, gates * h))
        b = rng.standard_normal(gates * h)
        cases.append((f"{kind}_fwd", (x, wx, wh, b)))
        caches = getattr(numpy_backend, f"{kind}_fwd")(x, wx, wh, b)
        gh = rng.standard_normal(caches[0].shape)
        cases.append((f"{kind}_bwd", (gh, x, wx, wh, b) + caches))
    return cases


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<14} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, case_args in build_cases(rng):
        t_np = _time(getattr(numpy_backend, name), *case_args, repeats=args.repeats)
        t_nb = _time(getattr(numba_backend, name), *case_args, repeats=args.repeats)
        print(f"{name:<14} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
