"""Time the pointwise kernels on each backend and one full right-hand side.

Usage::

    python benchmarks/bench_kernels.py [--n 256] [--repeat 20]

Prints one line per kernel with the best-of-``repeat`` wall time for the
numpy fallback and the compiled extension, and their ratio.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from evflux import kernels
from evflux.constitutive import MollifierKernel, affine_law
from evflux.grid import Grid
from evflux.solver import SolverParams, initial_data, rhs


def _cases(n: int, rng: np.random.Generator):
    rho = 0.5 + rng.random((n, n))
    m = rng.standard_normal((2, n, n))
    u = m / rho
    du = rng.standard_normal((2, 2, n, n))
    drho = rng.standard_normal((2, n, n))
    mu = 0.1 + rng.random((n, n))
    lam = 0.1 * rng.random((n, n))
    z = 40 * rng.random((n, n))
    return {
        "pressure_law": lambda: kernels.pressure_law(rho, 1.0, 2.0, 0.01, 5.0),
        "sound_speed_sq": lambda: kernels.sound_speed_sq(rho, 1.0, 2.0, 0.01, 5.0),
        "pressure_curvature": lambda: kernels.pressure_curvature(rho, 1e-12, 1.0, 2.0, 0.01, 5.0),
        "momentum_flux": lambda: kernels.momentum_flux(m, u, du, mu, lam),
        "eps_cross": lambda: kernels.eps_cross(du, drho, 0.01),
        "truncation": lambda: kernels.truncation(z, 8.0),
    }


def _best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256, help="grid points per side")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    backends = ["python"] + (["cython"] if kernels.compiled_available() else [])
    cases = _cases(args.n, np.random.default_rng(0))
    prev = kernels.BACKEND
    print(f"grid {args.n}x{args.n}, best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    try:
        for name, fn in cases.items():
            times = []
            for b in backends:
                kernels.use_backend(b)
                times.append(_best(fn, args.repeat))
            line = f"{name:<20}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
            if len(times) > 1:
                line += f"   {times[0] / times[1]:>6.2f}x"
            print(line)

        g = Grid.square(args.n)
        p = SolverParams(law=affine_law(0.05, 0.05), kernel=MollifierKernel(0.6), eps=0.01)
        s = initial_data("taylor-green", g, amp=0.2)
        times = []
        for b in backends:
            kernels.use_backend(b)
            times.append(_best(lambda: rhs(s, g, p), max(3, args.repeat // 4)))
        line = f"{'rhs (full)':<20}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
        if len(times) > 1:
            line += f"   {times[0] / times[1]:>6.2f}x"
        print(line)
    finally:
        kernels.use_backend(prev)


if __name__ == "__main__":
    main()
