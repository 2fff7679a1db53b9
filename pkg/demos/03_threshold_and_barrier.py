"""
The stability threshold and its barrier
=======================================

b_max = 1 / int theta for four radial profiles. Below b_max a positive,
decreasing barrier exists; just above it the slope window is empty.
"""

from isopde import FiberSpec, WarpedGeometry, build_barrier, build_grid, compute_threshold, lambda1
from isopde.errors import WindowError
from isopde.functions import Cosh
from isopde.geometry import flat, gaussian_slab, polar

geometries = {
    "flat [0, 1]": flat(0.0, 1.0),
    "gaussian [-1, 1]": gaussian_slab(-1.0, 1.0),
    "sigma = r, m = 3": polar(1.0, 2.0, 3),
    "sigma = cosh r": WarpedGeometry(2, 0.0, 1.0, Cosh(), 0.0, FiberSpec.point()),
}

for name, geom in geometries.items():
    b_max = compute_threshold(geom)
    rep = build_barrier(geom, 0.9 * b_max, b_max=b_max)
    lam = lambda1(geom, build_grid(geom, 128), -0.9 * b_max).lambda1
    try:
        build_barrier(geom, 1.1 * b_max, b_max=b_max)
        above = "barrier built (unexpected)"
    except WindowError:
        above = "no barrier"
    print(f"{name:18s} b_max={b_max:.8f}  phi in [{rep.phi_min:.3f}, {rep.phi_max:.3f}]  "
          f"lambda1(B=0.9 b_max)={lam:.4f}  at 1.1 b_max: {above}")

for W in (0.5, 1.0, 2.0, 4.0):
    print(f"W = {W}: b_max W^2 = {compute_threshold(flat(0.0, W)) * W * W:.12f}")
