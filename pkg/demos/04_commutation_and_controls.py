"""
Averaging commutes with the operator, until the weight stops splitting
======================================================================

For Psi = Phi(r) the leaf average and the rotation d/dxi commute with
Delta_Psi up to the O(h^2) discretization error. Coupling the weight to the
fiber (Psi += r sin xi) or using a non-Killing fiber weight (Gamma = cos xi)
leaves an O(1) residual that refinement does not remove.
"""

import numpy as np

from isopde import FiberSpec, WarpedGeometry, build_grid
from isopde.functions import Cos, Power, Sin, quadratic
from isopde.geometry import Coupling
from isopde.harness import loglog_slope
from isopde.symmetry import commutation_residual, killing_commutation_residual

phi = quadratic(0.5)
split = WarpedGeometry(2, 1.0, 2.0, Power(1.0), phi, FiberSpec.circle())
coupled = WarpedGeometry(2, 1.0, 2.0, Power(1.0), phi, FiberSpec.circle(), Coupling(Power(1.0), Sin()))
tilted = WarpedGeometry(2, 1.0, 2.0, Power(1.0), phi, FiberSpec.circle(gamma=Cos()))
u = lambda r, xi: np.exp(r) + np.cos(2 * r) * np.sin(xi[..., 0])

rows = []
for n_r, n_f in [(32, 16), (64, 32), (128, 64)]:
    g = build_grid(split, n_r, n_f)
    rows.append((
        g.h_r,
        commutation_residual(split, g, u),
        killing_commutation_residual(split, g, u),
        commutation_residual(coupled, build_grid(coupled, n_r, n_f), u),
        killing_commutation_residual(tilted, build_grid(tilted, n_r, n_f), u, check=False),
    ))
    print("h={:.4f}  average {:.2e}  rotation {:.2e}  coupled {:.3f}  cos-weight {:.3f}".format(*rows[-1]))

h = [r[0] for r in rows]
print("slopes: average", round(loglog_slope(h, [r[1] for r in rows]), 2),
      " rotation", round(loglog_slope(h, [r[2] for r in rows]), 2))
