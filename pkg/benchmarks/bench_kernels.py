"""Time the numba and numpy paths of the hot kernels and check they agree.

    python3 benchmarks/bench_kernels.py [--nr 65 --nz 129 --repeat 3]
"""
from __future__ import annotations

import argparse
import os
import timeit

import numpy as np

from bosatom import kernels
from bosatom.grid import build_grid

FLAG = "BOSATOM_DISABLE_NUMBA"


def _cases(nr: int, nz: int):
    g = build_grid(20.0, 20.0, nr, nz)
    rng = np.random.default_rng(0)
    dz = g.hz * np.arange(1, nz)
    khat = rng.standard_normal((nr, nr, nz))
    qhat = rng.standard_normal((nr, nz)) + 1j * rng.standard_normal((nr, nz))
    psi = rng.random(g.shape)
    ar, az = g.face_areas
    return {
        "kernel_table": lambda: kernels.kernel_table(g.r_nodes, dz),
        "fourier_contract": lambda: kernels.fourier_contract(khat, qhat),
        "face_energy": lambda: kernels.face_energy(psi, ar, az, g.hr, g.hz),
    }


def run(nr: int, nz: int, repeat: int) -> list[tuple[str, float, float, float]]:
    rows = []
    cases = _cases(nr, nz)
    for name, fn in cases.items():
        timings, results = {}, {}
        for mode in ("numba", "numpy"):
            os.environ[FLAG] = "1" if mode == "numpy" else "0"
            results[mode] = fn()  # warm-up, includes JIT compilation
            timings[mode] = min(timeit.repeat(fn, number=1, repeat=repeat))
        a, b = np.asarray(results["numba"]), np.asarray(results["numpy"])
        fin = np.isfinite(a)
        diff = float(np.max(np.abs(a[fin] - b[fin]) / np.maximum(np.abs(b[fin]), 1e-300)))
        rows.append((name, timings["numba"], timings["numpy"], diff))
    os.environ.pop(FLAG, None)
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nr", type=int, default=65)
    ap.add_argument("--nz", type=int, default=129)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"grid {args.nr} x {args.nz}")
    print(f"{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>9}{'max rel diff':>14}")
    for name, tn, tp, diff in run(args.nr, args.nz, args.repeat):
        print(f"{name:<18}{tn:>12.4g}{tp:>12.4g}{tp / tn:>9.2f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
