"""Time the numba and numpy flavours of the per-point 3D kernels.

Usage: python3 benchmarks/bench_kernels.py [n_points] [repeats]
"""
import sys
import timeit

import numpy as np

from grownplate import _accel, kernels


def main(n=200_000, repeats=5):
    rng = np.random.default_rng(0)
    Hd = 1e-2 * rng.normal(size=(n, 3, 3))
    B = 1e-3 * rng.normal(size=(n, 3, 3))
    F = np.eye(3) + 0.1 * rng.normal(size=(n, 3, 3))
    mu, lam = 1.0, 0.7
    if not _accel.HAS_NUMBA:
        print("numba is not installed; only the numpy path can be timed")
    cases = {
        "svk": (lambda: kernels.svk_numpy(Hd, B, mu, lam),
                lambda: kernels._svk_numba(Hd, B, mu, lam)),
        "dist2_so3": (lambda: kernels.dist2_so3_numpy(F),
                      lambda: kernels._dist2_so3_numba(F)),
    }
    print(f"{'kernel':<10} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8} {'max diff':>10}")
    for name, (f_np, f_nb) in cases.items():
        r_np = f_np()
        t_np = min(timeit.repeat(f_np, number=1, repeat=repeats))
        if _accel.HAS_NUMBA:
            r_nb = f_nb()  # compile outside the timing
            t_nb = min(timeit.repeat(f_nb, number=1, repeat=repeats))
            a = np.concatenate([np.ravel(x) for x in (r_np if isinstance(r_np, tuple) else (r_np,))])
            b = np.concatenate([np.ravel(x) for x in (r_nb if isinstance(r_nb, tuple) else (r_nb,))])
            diff = float(np.max(np.abs(a - b)))
            print(f"{name:<10} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f} {diff:10.2e}")
        else:
            print(f"{name:<10} {1e3 * t_np:11.2f} {'-':>11} {'-':>8} {'-':>10}")


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:3]]
    main(*args)
