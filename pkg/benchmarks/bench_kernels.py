"""Time the hot kernels under the numba and numpy backends.

    python benchmarks/bench_kernels.py --n 129 --repeat 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from illumwave import _accel, kernels
from illumwave.geometry import Ball, IlluminatingBody
from illumwave.solver import build_grid


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n: int, points: int):
    h = 4.0 / (n - 1)
    grid = build_grid(IlluminatingBody.sphere(1.0), Ball(0.8), h, 2.0, 3.0)
    rng = np.random.default_rng(0)
    prev = rng.standard_normal(grid.shape) * grid.active
    curr = rng.standard_normal(grid.shape) * grid.active
    out = np.zeros(grid.shape)
    dt = 0.5 * h
    k = len(grid.table_idx)
    x = rng.uniform(-3, 3, (points, 3))
    rho = np.hypot(x[:, 0], x[:, 1])
    z = x[:, 2]
    return {
        "leapfrog_step": lambda: kernels.leapfrog_step(prev, curr, out, grid.active, dt, h, True),
        "half_step_energy": lambda: kernels.half_step_energy(prev, curr, grid.active, dt, h, True),
        "grid_sums": lambda: kernels.grid_sums(prev, curr, out, grid.active, h, dt),
        "table_densities": lambda: kernels.table_densities(
            prev, curr, out, grid.table_idx, grid.table_sr, grid.table_nu, 0, k, h, dt
        ),
        "spheroid_foot": lambda: kernels.spheroid_foot(rho, z, 1.0, 1.3),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=129, help="grid nodes per axis")
    ap.add_argument("--points", type=int, default=20_000, help="points for the foot-point solve")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = ["numba", "numpy"] if _accel.numba is not None else ["numpy"]
    times = {}
    for b in backends:
        with _accel.use_backend(b):
            for name, fn in cases(args.n, args.points).items():
                fn()  # compile / warm caches
                times[(name, b)] = _best(fn, args.repeat)
    print(f"grid {args.n}^3, {args.points} foot points, best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name in dict.fromkeys(k[0] for k in times):
        row = f"{name:<18}" + "".join(f"{times[(name, b)] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{times[(name, 'numpy')] / times[(name, 'numba')]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
