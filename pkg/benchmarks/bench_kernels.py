"""Numba vs numpy timings for the hot kernels.

    python3 benchmarks/bench_kernels.py [--size 1000000] [--fft-n 1024] [--repeat 5]

Both paths run in one process: the dispatchers read APPROXAI_DISABLE_NUMBA on
every call. Outputs are compared bit for bit before anything is timed.
"""

import argparse
import os
import timeit
from contextlib import contextmanager

import numpy as np

from approxai.apxfft import ComplexSignal, LevelSchedule, ax_fft
from approxai.apxnum import encode, mul_bits, mul_wide

FLAG = "APPROXAI_DISABLE_NUMBA"


@contextmanager
def backend(name):
    old = os.environ.get(FLAG)
    os.environ[FLAG] = "1" if name == "numpy" else "0"
    try:
        yield
    finally:
        if old is None:
            os.environ.pop(FLAG, None)
        else:
            os.environ[FLAG] = old


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1_000_000, help="operand pairs per multiply call")
    ap.add_argument("--fft-n", type=int, default=1024, help="FFT length")
    ap.add_argument("--fft-rows", type=int, default=64, help="signals per FFT call")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    a = encode(rng.normal(size=args.size))
    b = encode(rng.normal(size=args.size))
    sig = ComplexSignal.from_complex(rng.normal(size=(args.fft_rows, args.fft_n))
                                     + 1j * rng.normal(size=(args.fft_rows, args.fft_n)))
    stages = args.fft_n.bit_length() - 1
    sched = LevelSchedule(tuple(k % 12 for k in range(stages)))

    kernels = {
        "mul_bits": lambda: mul_bits(a, b, 5),
        "mul_wide": lambda: mul_wide(a, b, 5),
        "ax_fft": lambda: ax_fft(sig, sched),
    }
    print(f"{'kernel':<10} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8}  same output")
    for name, fn in kernels.items():
        with backend("numba"):
            fn()  # compile outside the timed region
            fast_out = fn()
            fast = best_of(fn, args.repeat)
        with backend("numpy"):
            slow_out = fn()
            slow = best_of(fn, args.repeat)
        if isinstance(fast_out, ComplexSignal):
            same = np.array_equal(fast_out.re, slow_out.re) and np.array_equal(fast_out.im, slow_out.im)
        else:
            same = np.array_equal(fast_out, slow_out)
        print(f"{name:<10} {slow:>10.4f} {fast:>10.4f} {slow / fast:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
