"""
Strong-stability threshold on warped annuli and the radial barrier behind it.

With ``rho(r) = e^-Phi(r) sigma(r)^(m-1)`` (the leaf density) define

    theta(s) = int_{r1}^{s} rho(z) dz / rho(s),        b_max = 1 / int_{r1}^{r2} theta.

For ``0 <= B < b_max`` the radial function

    phi(t) = 1 + b rho(r1) int_{r1}^{t} 1/rho  -  B int_{r1}^{t} theta

solves ``phi'' + drift phi' + B = 0`` with ``phi(r1) = 1`` and ``phi'(r1) = b``;
for a suitable ``b < 0`` it is positive and decreasing, which certifies
``lambda1(-(Delta_Psi - q)) > 0`` for every ``q >= -B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, QuadratureError, WindowError
from .geometry import WarpedGeometry, annulus_volume, leaf_data, log_scaled_integral, quad

THETA_EPSABS = 1e-13
THETA_EPSREL = 1e-11


def theta(geom: WarpedGeometry, s: float, r0: float | None = None) -> float:
    """``int_{r0}^{s} rho(z) dz / rho(s)``, integrated as a ratio to avoid overflow."""
    r0 = geom.r1 if r0 is None else r0
    if s <= r0:
        return 0.0
    return log_scaled_integral(lambda z: float(geom.log_density(z)), r0, s,
                               epsabs=THETA_EPSABS, epsrel=THETA_EPSREL)


def _inv_density_ratio(geom: WarpedGeometry, t: float) -> float:
    """``rho(r1) int_{r1}^{t} 1/rho``."""
    l1 = float(geom.log_density(geom.r1))
    return quad(lambda s: math.exp(l1 - float(geom.log_density(s))), geom.r1, t,
                epsabs=THETA_EPSABS, epsrel=THETA_EPSREL)


def theta_integral(geom: WarpedGeometry, a: float | None = None, b: float | None = None) -> float:
    a = geom.r1 if a is None else a
    b = geom.r2 if b is None else b
    return quad(lambda s: theta(geom, s, geom.r1), a, b, epsabs=1e-13, epsrel=1e-10)


def compute_threshold(geom: WarpedGeometry) -> float:
    """``b_max = 1 / int_{r1}^{r2} theta(s) ds``; split weights only."""
    if not geom.split:
        raise ConfigError("threshold is only available for split weights Phi(r) + Gamma(xi)")
    total = theta_integral(geom)
    if not total > 0:
        raise QuadratureError("theta integral is not positive")
    return 1.0 / total


@dataclass
class ThresholdReport:
    b_max: float
    B: float
    b: float
    r: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    dphi: np.ndarray = field(repr=False)
    phi_min: float = 0.0
    phi_max: float = 0.0
    barrier_residual: float = 0.0

    def summary(self) -> dict:
        return {
            "b_max": self.b_max,
            "B": self.B,
            "b": self.b,
            "phi_min": self.phi_min,
            "phi_max": self.phi_max,
            "barrier_residual": self.barrier_residual,
        }

    def table(self) -> dict:
        """Columns ``r, theta, phi`` for CSV export."""
        return {"r": self.r, "theta": self.theta, "phi": self.phi}


def build_barrier(geom: WarpedGeometry, B: float, b: float | None = None, n_samples: int = 201,
                  b_max: float | None = None) -> ThresholdReport:
    """Construct and verify the barrier for the lower bound ``B``.

    ``b`` is the initial slope; if omitted it is picked in the admissible
    window ``-1 < A(r2) - B(r2) < 0``, aiming ``phi(r2)`` at 1/2 and falling
    back to the middle of the window when that would need ``b >= 0``.
    """
    if B < 0:
        raise ConfigError("B must be >= 0")
    b_max = compute_threshold(geom) if b_max is None else b_max
    K = _inv_density_ratio(geom, geom.r2)
    B_end = B * theta_integral(geom)
    # phi(r2) = 1 + b K - B_end must lie in (0, 1) with b < 0
    if not B_end < 1.0:
        raise WindowError(f"B = {B:.6g} >= b_max = {b_max:.6g}: no admissible slope")
    lo, hi = (B_end - 1.0) / K, min(0.0, B_end / K)
    if b is None:
        target = (B_end - 0.5) / K
        b = target if lo < target < hi and target < 0 else 0.5 * (lo + hi)
    if not (b < 0 and lo < b < hi):
        raise WindowError(f"slope b = {b:.6g} outside the admissible window ({lo:.6g}, {hi:.6g})")

    r = np.linspace(geom.r1, geom.r2, n_samples)
    th = np.array([theta(geom, s) for s in r])
    # cumulative integrals on consecutive sample intervals
    inv = np.zeros_like(r)
    cum_th = np.zeros_like(r)
    for i in range(1, r.size):
        inv[i] = inv[i - 1] + _inv_density_ratio_between(geom, r[i - 1], r[i])
        cum_th[i] = cum_th[i - 1] + quad(lambda s: theta(geom, s), r[i - 1], r[i], epsabs=1e-14, epsrel=1e-11)
    phi = 1.0 + b * inv - B * cum_th
    rho1 = float(geom.density(geom.r1))
    rho = geom.density(r)
    dphi = (b * rho1 - B * th * rho) / rho
    d2phi = -B - geom.drift(r) * dphi
    residual = float(np.maximum(d2phi + geom.drift(r) * dphi + B, 0.0).max())
    report = ThresholdReport(b_max, B, b, r, th, phi, dphi, float(phi.min()), float(phi.max()), residual)
    if not (phi.min() > 0 and np.all(np.diff(phi) < 0) and abs(phi[0] - 1.0) < 1e-14):
        raise WindowError("constructed barrier is not positive and decreasing")
    return report


def _inv_density_ratio_between(geom: WarpedGeometry, a: float, b: float) -> float:
    l1 = float(geom.log_density(geom.r1))
    return quad(lambda s: math.exp(l1 - float(geom.log_density(s))), a, b,
                epsabs=THETA_EPSABS, epsrel=THETA_EPSREL)


def barrier_fd_residual(geom: WarpedGeometry, report: ThresholdReport, q=None) -> float:
    """Max of ``phi'' + drift phi' - q phi`` by second differences of the samples.

    ``q`` defaults to ``-B``, the worst admissible potential.
    """
    r, phi = report.r, report.phi
    h = r[1] - r[0]
    d2 = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h**2
    d1 = (phi[2:] - phi[:-2]) / (2 * h)
    q = -report.B if q is None else q
    q = np.broadcast_to(np.asarray(q, dtype=float), r.shape)[1:-1]
    return float((d2 + geom.drift(r[1:-1]) * d1 - q * phi[1:-1]).max())


def cheeger_quotient(geom: WarpedGeometry, s: float) -> float:
    """``vol_Psi(A(r1, s)) / area_Psi(Sigma_s)``; equals ``theta(s)`` for split weights."""
    if not geom.r1 < s <= geom.r2:
        raise ConfigError("s must lie in (r1, r2]")
    return annulus_volume(geom, geom.r1, s) / leaf_data(geom, s).area_psi


def infinite_annulus_diagnostic(geom: WarpedGeometry, r_max: float, rtol: float = 1e-3):
    """``int_{r1}^{r_max} theta`` and whether it looks convergent.

    Truncation evidence only: the integral up to ``r_max`` is compared with
    the one up to the midpoint of ``[r1, r_max]``.
    """
    ext = geom.with_interval(geom.r1, r_max)
    mid = geom.r1 + 0.5 * (r_max - geom.r1)
    part = theta_integral(ext, geom.r1, mid)
    total = part + theta_integral(ext, mid, r_max)
    converging = abs(total - part) <= rtol * max(1.0, abs(total))
    return total, bool(converging)
