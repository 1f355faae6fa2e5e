"""Compiled vs pure-Python hot kernels, and direct vs FFT convolution.

Usage: python3 benchmarks/bench_core.py [--cells N] [--repeat R] [--end-to-end]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from nltraffic import _core
from nltraffic.kernels import KernelSpec, convolve, discretize
from nltraffic.mesh import Grid1D


def best(fn, repeat: int) -> float:
    number = 1
    while timeit.timeit(fn, number=number) < 0.05 and number < 10_000:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_backends(cells: int, repeat: int) -> list[tuple[str, dict]]:
    rng = np.random.default_rng(0)
    grid = Grid1D(0.0, 10.0, cells)
    short = discretize(KernelSpec(0.03, 0.01), grid)
    rho = rng.random(cells)
    state = rng.random((3, cells))
    vel = rng.random((3, cells))
    values = rng.random((6, cells))
    x = rng.uniform(-0.5, 10.5, 4 * cells)
    cases = {
        f"convolve_direct ({len(short.weights)} taps)": lambda m: m.convolve_direct(short.weights, short.p_lo, rho,
                                                                                      grid.dx),
        "lf_step (3 classes)": lambda m: m.lf_step(state, vel, 0.5),
        "interp_linear (6 rows)": lambda m: m.interp_linear(values, x, grid.x_lo, grid.dx),
    }
    rows = []
    for name, call in cases.items():
        rows.append((name, {b: best(lambda m=mod: call(m), repeat) for b, mod in _core.available_backends().items()}))
    return rows


def bench_engines(cells: int, repeat: int) -> dict:
    grid = Grid1D(0.0, 10.0, cells)
    dk = discretize(KernelSpec(1.5, 0.01), grid)
    rho = np.random.default_rng(1).random(cells)
    return {e: best(lambda e=e: convolve(dk, rho, engine=e), repeat) for e in ("direct", "fft")}, len(dk.weights)


def end_to_end(backend: str, cells: int) -> float:
    code = (
        "import time; from nltraffic.scenario import preset, run_scenario;"
        f"t=time.perf_counter(); run_scenario(preset('bottleneck', cells={cells}, solver='lagrangian').with_(t_final=4.0,"
        " snapshots=[0.0, 4.0])); print(time.perf_counter()-t)"
    )
    env = dict(os.environ, NLTRAFFIC_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true", help="also time a Lagrangian run under each backend")
    args = ap.parse_args()

    print(f"active backend: {_core.BACKEND}; cells: {args.cells}")
    print(f"{'kernel':<32}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for name, t in bench_backends(args.cells, args.repeat):
        py, cy = t["python"], t.get("cython", float("nan"))
        print(f"{name:<32}{1e3 * py:>14.4f}{1e3 * cy:>14.4f}{py / cy:>10.1f}")

    times, taps = bench_engines(args.cells, args.repeat)
    print(f"\nconvolution with {taps} taps: direct {1e3 * times['direct']:.3f} ms, fft {1e3 * times['fft']:.3f} ms, "
          f"fft speedup {times['direct'] / times['fft']:.1f}x")

    if args.end_to_end:
        print("\nlagrangian bottleneck to t=4 at 1000 cells:")
        for b in _core.available_backends():
            print(f"  {b:<8}{end_to_end(b, 1000):8.2f} s")


if __name__ == "__main__":
    main()
