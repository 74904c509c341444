"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel with the best time for each available backend and
the speedup. Inputs match what the extraction loop feeds the kernels: a
128^3 grid with 100K query points, 100K closest-point triangle queries, and
hole loops of 40 vertices.
"""

import argparse
import timeit

import numpy as np

from udfsw import kernels


def cases(rng):
    k = 128
    vals = rng.uniform(0, 1, (k, k, k))
    origin, spacing = np.full(3, -0.5), np.full(3, 1.0 / (k - 1))
    pts = rng.uniform(-0.5, 0.5, (100_000, 3))
    a, b, c, p = (rng.normal(size=(100_000, 3)) for _ in range(4))
    t = np.sort(rng.uniform(0, 2 * np.pi, 40))
    loop = np.stack([np.cos(t), np.sin(t), rng.normal(0, 0.1, 40)], 1)
    return {
        "trilinear 100K pts": lambda m: m.trilinear(vals, origin, spacing, pts),
        "closest_point 100K tris": lambda m: m.closest_point_triangles(p, a, b, c),
        "min_area_triangulation n=40": lambda m: m.min_area_triangulation(loop),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    mods = kernels.backends()
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':32s}" + "".join(f"{n:>12s}" for n in mods) + "     speedup")
    for name, fn in cases(np.random.default_rng(0)).items():
        best = {n: min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) for n, m in mods.items()}
        row = f"{name:32s}" + "".join(f"{best[n] * 1e3:10.1f}ms" for n in mods)
        if "cython" in best:
            row += f"  {best['python'] / best['cython']:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
