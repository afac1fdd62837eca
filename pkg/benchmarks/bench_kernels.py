"""Timing comparison of the compiled kernels against the pure fallback.

Run directly: python benchmarks/bench_kernels.py [--nx N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from meshsteer import kernels
from meshsteer.generators import generate_box_channel
from meshsteer.kernels import _fallback
from meshsteer.mesh import extract_surface


def timeit(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=24)
    args = ap.parse_args()

    mesh = generate_box_channel(args.nx, args.nx // 2, args.nx // 2, (1.0, 0.5, 0.5))
    surface = extract_surface(mesh)
    youngs = np.ones(mesh.num_tets)
    print(f"mesh: {mesh.num_tets} tets, {mesh.num_vertices} vertices")
    print(f"compiled extension available: {kernels.COMPILED}")

    cases = [
        ("tet_volumes", (mesh.vertices, mesh.tets)),
        ("scaled_jacobians", (mesh.vertices, mesh.tets)),
        ("tet_stiffness_triplets", (mesh.vertices, mesh.tets)),
        ("elastic_stiffness_triplets", (mesh.vertices, mesh.tets, youngs, 0.3)),
        ("triangle_areas", (surface.vertices, surface.triangles)),
        ("cotan_triplets", (surface.vertices, surface.triangles)),
    ]
    header = f"{'kernel':<28}{'compiled (ms)':>14}{'fallback (ms)':>14}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, call_args in cases:
        tc = timeit(getattr(kernels, name), *call_args)
        tf = timeit(getattr(_fallback, name), *call_args)
        ratio = tf / tc if tc > 0 else float("inf")
        print(f"{name:<28}{tc * 1e3:>14.3f}{tf * 1e3:>14.3f}{ratio:>8.2f}x")


if __name__ == "__main__":
    main()
