"""Compiled Jacobi kernel against the numpy fallback.

Usage: python3 benchmarks/bench_eig.py [--sizes 1000,16384,65536] [--repeat 5]

Reports the best wall time per batch size and checks that both kernels
return bitwise-identical results.
"""
import argparse
import time

import numpy as np

from hpdnet import _jacobi_py

try:
    from hpdnet import _jacobi3
except ImportError:
    _jacobi3 = None


def batch(n, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, 3, 3)) + 1j * rng.standard_normal((n, 3, 3))
    a = a @ np.conj(np.swapaxes(a, 1, 2)) + 1e-3 * np.eye(3)
    return np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="1000,16384,65536")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _jacobi3 is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'matrices':>9} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8} {'identical':>9}")
    for n in (int(s) for s in args.sizes.split(",")):
        data = batch(n)
        t_py, ref = best_of(_jacobi_py.eigh3_batch, data, args.repeat)
        if _jacobi3 is None:
            print(f"{n:>9} {1e3 * t_py:>10.2f} {'-':>12} {'-':>8} {'-':>9}")
            continue
        t_c, got = best_of(_jacobi3.eigh3_batch, data, args.repeat)
        same = all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(got, ref))
        print(f"{n:>9} {1e3 * t_py:>10.2f} {1e3 * t_c:>12.2f} {t_py / t_c:>8.1f} {str(same):>9}")


if __name__ == "__main__":
    main()
