"""Time the numba kernels against their pure-numpy counterparts.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Both kernel sets are imported side by side, so the ``GEOMRAZOR_DISABLE_JIT``
flag does not matter here.  Compilation happens once before timing.
"""

import argparse
import timeit

import numpy as np
from scipy.spatial import ConvexHull

from geomrazor import _accel


def cases(rng):
    a = rng.standard_normal((64, 64))
    gram = a.T @ a
    stack = rng.standard_normal((2000, 16, 8))
    grams = np.einsum("bki,bkj->bij", stack, stack)
    x = np.linspace(-2, 2, 1 << 16)
    y = np.tanh(3 * x) * np.sin(5 * x)
    hull = ConvexHull(rng.standard_normal((40, 3)))
    pts = rng.uniform(-2, 2, (200_000, 3))
    return {
        "power_iteration 64x64": lambda k: k.power_iteration(gram, np.ones(64), 1e-12, 100_000),
        "batched_power_iteration 2000x8x8": lambda k: k.batched_power_iteration(grams, 1e-12, 100_000),
        "polyline_length 65536": lambda k: k.polyline_length(x, y),
        "trapezoid 65536": lambda k: k.trapezoid(x, y),
        "halfspace_contains 200000x3": lambda k: k.halfspace_contains(pts, hull.equations, 1e-12),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, call in cases(rng).items():
        call(_accel.NUMBA_KERNELS)  # compile
        t_nb = min(timeit.repeat(lambda: call(_accel.NUMBA_KERNELS), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: call(_accel.NUMPY_KERNELS), number=1, repeat=args.repeat))
        print(f"{name:36s} {1e3 * t_nb:10.3f} {1e3 * t_np:10.3f} {t_np / t_nb:7.2f}x")


if __name__ == "__main__":
    main()
