#!/usr/bin/env python3
"""Benchmark the numba and numpy kernel backends on reference-net shapes.

Runs each hot kernel on the layer geometries of the bundled 13-layer
architecture and prints per-backend wall times plus the speedup. JIT
compilation happens during an untimed warmup pass.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from convagg.kernels import _numpy

try:
    from convagg.kernels import _numba
except ImportError:
    _numba = None

# (name, builder) pairs; shapes follow the bundled reference architecture
CASES = []


def case(name):
    def wrap(fn):
        CASES.append((name, fn))
        return fn
    return wrap


@case("conv1 11x11/4 3->96 @224")
def conv1(rng):
    x = rng.normal(size=(224, 224, 3)).astype(np.float32)
    w = rng.normal(size=(96, 11, 11, 3)).astype(np.float32)
    b = rng.normal(size=96).astype(np.float32)
    return ("conv2d", (x, w, b, 4, 2, 1, True))


@case("conv2 5x5/1 g2 96->256 @27")
def conv2(rng):
    x = rng.normal(size=(27, 27, 96)).astype(np.float32)
    w = rng.normal(size=(256, 5, 5, 48)).astype(np.float32)
    b = rng.normal(size=256).astype(np.float32)
    return ("conv2d", (x, w, b, 1, 2, 2, True))


@case("conv3 3x3/1 256->384 @13")
def conv3(rng):
    x = rng.normal(size=(13, 13, 256)).astype(np.float32)
    w = rng.normal(size=(384, 3, 3, 256)).astype(np.float32)
    b = rng.normal(size=384).astype(np.float32)
    return ("conv2d", (x, w, b, 1, 1, 1, True))


@case("lrn w5 @55x55x96")
def lrn1(rng):
    x = rng.normal(size=(55, 55, 96)).astype(np.float32)
    return ("lrn", (x, 5, 2.0, 1e-4, 0.75))


@case("pool 3x3/2 @55x55x96")
def pool1(rng):
    x = rng.normal(size=(55, 55, 96)).astype(np.float32)
    return ("maxpool", (x, 3, 2))


@case("dense 9216->4096")
def dense1(rng):
    flat = rng.normal(size=9216).astype(np.float32)
    w = rng.normal(size=(4096, 9216)).astype(np.float32)
    b = rng.normal(size=4096).astype(np.float32)
    return ("dense", (flat, w, b, True))


def run(impl, fn_name, args, repeat):
    fn = getattr(impl, fn_name)
    fn(*args)  # warmup (JIT compile / cache touch)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    header = f"{'case':<30} {'numpy':>10} {'numba':>10} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, builder in CASES:
        fn_name, fn_args = builder(rng)
        t_np = run(_numpy, fn_name, fn_args, args.repeat)
        if _numba is not None:
            t_nb = run(_numba, fn_name, fn_args, args.repeat)
            print(f"{name:<30} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
                  f"{t_np / t_nb:>8.2f}x")
        else:
            print(f"{name:<30} {t_np * 1e3:>8.2f}ms {'n/a':>10} {'':>9}")


if __name__ == "__main__":
    main()
