"""Throughput comparison: accelerated kernels vs the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--edge 0.10] [--repeats 5]

Times the loop kernels (jit-compiled when numba is active) against the
vectorized numpy implementations on realistic problem sizes.  Run with
EITDM_NUMBA=0 to measure the fallback-only configuration; expect the
loop column to be much slower there, since it is then plain Python.
"""

import argparse
import time

import numpy as np

from eitdm import kernels
from eitdm.fem import canonical_pairs
from eitdm.geometry import SensorGeometry
from eitdm.grids import PixelGrid, element_pixel_map
from eitdm.guidance import default_se
from eitdm.mesh import build_mesh


def best_of(fn, args, repeats):
    fn(*args)   # warm-up, also triggers jit compilation
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(
        description="benchmark the hot kernels against the numpy fallback")
    ap.add_argument("--edge", type=float, default=0.10,
                    help="mesh edge length in mm (default 0.10)")
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats, best is reported")
    args = ap.parse_args()

    geo = SensorGeometry()
    mesh = build_mesh(geo, args.edge)
    grid = PixelGrid.for_geometry(geo)
    rng = np.random.default_rng(0)

    b, c, area = mesh.coeff_b, mesh.coeff_c, mesh.element_areas
    sigma = rng.uniform(0.01, 0.05, mesh.n_elements)
    u = rng.normal(size=mesh.n_nodes)
    fields = rng.normal(size=(16, mesh.n_nodes))
    grads = np.stack([kernels.element_gradients(b, c, area, mesh.elements, f)
                      for f in fields])
    pairs = np.array([(ell - 1, g - 1) for ell, g in canonical_pairs()],
                     dtype=np.int64)
    elem_pix = element_pixel_map(mesh, grid)
    img = (rng.random((406, 406)) < 0.5).astype(np.uint8)
    se = default_se()

    cases = [
        ("stiffness_values",
         kernels._stiffness_values_fast, kernels._stiffness_values_numpy,
         (b, c, area, sigma)),
        ("element_gradients",
         kernels._element_gradients_fast, kernels._element_gradients_numpy,
         (b, c, area, mesh.elements, u)),
        ("pair_pixel_sensitivities",
         kernels._pair_pixel_sensitivities_fast,
         kernels._pair_pixel_sensitivities_numpy,
         (grads, area, pairs, elem_pix, grid.n_support)),
        ("binary_erode (406x406)",
         kernels._binary_erode_fast, kernels._binary_erode_numpy,
         (img, se)),
        ("binary_dilate (406x406)",
         kernels._binary_dilate_fast, kernels._binary_dilate_numpy,
         (img, se)),
    ]

    label = "numba" if kernels.NUMBA_ENABLED else "python"
    print(f"mesh edge {args.edge} mm: {mesh.n_elements} elements, "
          f"{mesh.n_nodes} nodes; best of {args.repeats}")
    print(f"{'kernel':<28}{label:>10}{'numpy':>12}{'speedup':>10}")
    for name, fast, ref, fargs in cases:
        t_fast = best_of(fast, fargs, args.repeats)
        t_ref = best_of(ref, fargs, args.repeats)
        print(f"{name:<28}{t_fast * 1e3:>8.2f} ms{t_ref * 1e3:>9.2f} ms"
              f"{t_ref / t_fast:>9.1f}x")
        parity = np.max(np.abs(np.asarray(fast(*fargs), dtype=np.float64)
                               - np.asarray(ref(*fargs), dtype=np.float64)))
        if parity > 1e-9:
            raise SystemExit(f"paths disagree on {name}: {parity}")


if __name__ == "__main__":
    main()
