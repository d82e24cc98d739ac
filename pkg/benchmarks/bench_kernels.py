"""Time the numba and numpy kernel backends on coder- and solver-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import math
import time

import numpy as np

from crdlab import kernels


def cases(N=200_000, grid_points=2048, horizon=256):
    rng = np.random.default_rng(0)
    x = np.cumsum(rng.standard_normal(N)) * 0.05
    z = (0.5 - rng.random(N)) * 1.379
    q = np.floor((x + z) / 1.379 + 0.5)
    vals = (np.where(q >= 0, 2 * q, -2 * q - 1) + 1).astype(np.uint64)
    grid = np.geomspace(1e-6 * 0.19, 1.0, grid_points)
    sym = rng.integers(0, 12, N)
    ctx = rng.integers(0, 16, N)
    return {
        "dpcm_encode": lambda k: k.dpcm_encode(x, z, 0.9, 1.379, 0.631),
        "gamma_encode": lambda k: k.gamma_encode(vals),
        "kt_codelengths": lambda k: k.kt_codelengths(sym, ctx, 12, 16),
        "dp_backward": lambda k: k.dp_backward(grid, horizon, 0.81, 0.19, 3.0),
        "refine_ratios": lambda k: k.refine_ratios(np.full(horizon, 0.3), 3.0, 0.81, 0.19, 1.0,
                                                   20000, 1e-14),
        "brute_force": lambda k: k.brute_force(3, 1e-3, 1.0, 0.81, 0.19, 0.3),
    }


def best_of(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = ["numpy"] + (["numba"] if kernels.NUMBA_AVAILABLE else [])
    mods = {n: kernels.backend(n) for n in names}
    print(f"{'kernel':<16}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases().items():
        if "numba" in mods:
            fn(mods["numba"])  # compile outside the timing
        t = {n: best_of(lambda m=m: fn(m), args.repeat) for n, m in mods.items()}
        row = f"{label:<16}" + "".join(f"{t[n]:>11.4f}s" for n in names)
        if len(names) > 1:
            row += f"{t['numpy'] / t['numba']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
