"""Time the compiled and pure-Python kernel backends on identical inputs.

    python benchmarks/bench_core.py [--points N] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from nsfarfield import core


def workloads(n: int, rng):
    pts = rng.uniform(-12, 12, size=(n, 2))
    ys = rng.uniform(0.1, 12, size=(n, 2))
    x = rng.uniform(0, 40, size=n)
    field = rng.normal(size=(1024, 1024))
    sample = rng.uniform(-15, 15, size=(n, 2))
    return {
        "gammainc_pq": lambda b: b.gammainc_pq(2.5, x),
        "kernel_parts": lambda b: b.kernel_parts(0, 0, 1, pts, 0.5),
        "psi_values": lambda b: b.psi_values(0, 0, 0, ys),
        "bilinear_sample": lambda b: b.bilinear_sample(field, -16.0, 32.0 / 1024, sample),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = core.backends()
    if "cython" not in backends:
        print("compiled backend not built; only the fallback is timed")
    jobs = workloads(args.points, np.random.default_rng(0))
    print(f"{'function':<16} " + " ".join(f"{name:>12}" for name in backends) + "      speedup  max|diff|")
    for fname, job in jobs.items():
        times, outs = {}, {}
        for name, mod in backends.items():
            outs[name] = job(mod)
            times[name] = min(timeit.repeat(lambda: job(mod), number=1, repeat=args.repeat))
        row = f"{fname:<16} " + " ".join(f"{times[n] * 1e3:10.2f}ms" for n in backends)
        if "cython" in times:
            a, b = (np.nan_to_num(np.asarray(outs[n], dtype=float)) for n in ("python", "cython"))
            row += f"  {times['python'] / times['cython']:9.1f}x  {np.max(np.abs(a - b)):.2e}"
        print(row)


if __name__ == "__main__":
    main()
