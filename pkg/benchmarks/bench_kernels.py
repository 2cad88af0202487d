"""Time the compiled kernels against the numpy fallback on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--points 200000]

Prints one row per kernel with the best-of-``repeat`` wall time for each
backend and the speed-up. Results are checked for agreement before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from spherepack import kernels
from spherepack.geometry import RAY_TOL, SampleSet, _RayFrame
from spherepack.model import preset
from spherepack.testkit import capsule


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def build_cases(n_points: int, n_spheres: int, seed: int):
    rng = np.random.default_rng(seed)
    mesh = capsule().mesh
    lo, hi = mesh.aabb
    pts = np.ascontiguousarray(lo + rng.random((n_points, 3)) * (hi - lo))
    samples = SampleSet.draw(mesh, 20_000, 20_000, seed)
    centers = np.ascontiguousarray(samples.interior_points[:n_spheres])
    radii = np.ascontiguousarray(rng.uniform(0.05, 0.2, n_spheres))
    w = preset("B")
    frame = _RayFrame.build(mesh.triangles, 0)
    rp = np.ascontiguousarray(pts @ frame.rotation.T)

    def cases(mod):
        return {
            "nearest_signed": lambda: mod.nearest_signed(pts, centers, radii),
            "any_sphere_contains": lambda: mod.any_sphere_contains(pts, centers, radii),
            "point_losses+grad": lambda: mod.point_losses(
                samples.interior_points, samples.surface_points, samples.surface_normals,
                centers, radii, w.w_c, w.w_b, w.w_s, w.w_q, False, True),
            "ray_parity": lambda: mod.ray_parity(
                frame.tris, rp, frame.cell_start, frame.cell_faces, frame.lo[0], frame.lo[1],
                frame.inv[0], frame.inv[1], frame.grid, RAY_TOL),
        }
    return cases


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        a, b = np.asarray(a), np.asarray(b)
        if a.dtype.kind in "biu":
            return np.array_equal(a, b)
        return np.allclose(a, b, rtol=1e-9, atol=1e-12)
    return abs(float(a) - float(b)) <= 1e-9 * max(1.0, abs(float(a)))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--points", type=int, default=200_000)
    parser.add_argument("--spheres", type=int, default=25)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    cases = build_cases(args.points, args.spheres, args.seed)
    per_backend = {name: cases(kernels.load_backend(name)) for name in backends}

    names = list(per_backend[backends[0]])
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends)
          + (f"{'speed-up':>10}" if len(backends) == 2 else ""))
    for name in names:
        if len(backends) == 2:
            ref = per_backend["python"][name]()
            got = per_backend["cython"][name]()
            if not _agree(got, ref):
                print(f"{name:<22} backends disagree")
                continue
        times = [_best(per_backend[b][name], args.repeat) for b in backends]
        row = f"{name:<22}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
