"""Compare the compiled geometry kernels against the pure-Python fallback.

Both backends are imported directly (bypassing the LGPLAN_PURE_PY switch)
so one process can time them side by side.  Workloads mirror the planner's
hot path: pose transforms, pairwise overlap tests, and one-against-many
collision queries over a packed scene.

Run:  python3 benchmarks/kernel_benchmark.py [--repeat N]
"""

import argparse
import math
import timeit

import numpy as np

from lgplan import _kernels_py

try:
    from lgplan import _kernels
except ImportError:
    _kernels = None


def make_polygons(rng, count):
    polys = []
    for _ in range(count):
        n = int(rng.integers(3, 7))
        radius = float(rng.uniform(0.02, 0.08))
        angles = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        verts = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
        x, y = rng.uniform(0.1, 0.9, size=2)
        polys.append(verts + np.array([x, y]))
    return polys


def pack(polys):
    flat = np.concatenate(polys).astype(np.float64)
    offsets = np.zeros(len(polys) + 1, dtype=np.intp)
    for i, p in enumerate(polys):
        offsets[i + 1] = offsets[i] + p.shape[0]
    aabbs = np.array(
        [[p[:, 0].min(), p[:, 0].max(), p[:, 1].min(), p[:, 1].max()] for p in polys],
        dtype=np.float64,
    )
    return flat, offsets, aabbs


def workloads(impl, polys, flat, offsets, aabbs):
    local = polys[0] - polys[0].mean(axis=0)
    probe = polys[0]

    def w_transform():
        impl.transform_polygon(local, 0.4, 0.6, math.cos(0.3), math.sin(0.3))

    def w_overlap():
        for q in polys[1:33]:
            impl.polys_overlap(probe, q, 1e-6)

    def w_bounds():
        for q in polys[:64]:
            impl.poly_in_bounds(q, 0.0, 1.0, 0.0, 1.0)

    def w_collide():
        impl.collide_indices(probe, flat, offsets, aabbs, 1e-6)

    return [
        ("transform_polygon", w_transform, 20000),
        ("polys_overlap x32", w_overlap, 2000),
        ("poly_in_bounds x64", w_bounds, 2000),
        ("collide_indices (n=128)", w_collide, 2000),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timeit repeats; the best run is reported")
    args = parser.parse_args()

    rng = np.random.default_rng(20240917)
    polys = make_polygons(rng, 128)
    flat, offsets, aabbs = pack(polys)

    backends = [("pure-python", _kernels_py)]
    if _kernels is not None:
        backends.insert(0, ("compiled", _kernels))
    else:
        print("compiled extension not built; timing the fallback only")

    results = {}
    for backend_name, impl in backends:
        for name, fn, number in workloads(impl, polys, flat, offsets, aabbs):
            best = min(timeit.repeat(fn, number=number, repeat=args.repeat))
            results[(name, backend_name)] = best / number * 1e6

    names = [w[0] for w in workloads(_kernels_py, polys, flat, offsets, aabbs)]
    header = f"{'workload':<26} " + " ".join(f"{b[0]:>12}" for b in backends)
    print(header)
    print("-" * len(header))
    for name in names:
        row = f"{name:<26} "
        row += " ".join(f"{results[(name, b[0])]:>10.2f}us" for b in backends)
        if _kernels is not None:
            speedup = results[(name, "pure-python")] / results[(name, "compiled")]
            row += f"   x{speedup:.1f}"
        print(row)


if __name__ == "__main__":
    main()
