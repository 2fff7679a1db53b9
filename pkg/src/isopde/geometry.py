"""
Weighted warped-product annuli ``[r1, r2] x_sigma N``.

The metric is ``dr^2 + sigma(r)^2 g_N`` and the weight splits as
``Psi(r, xi) = Phi(r) + Gamma(xi)``, so that

    Delta_Psi u = u_rr + drift(r) u_r + sigma(r)^-2 Delta^N_Gamma u,
    drift(r)    = (m - 1) sigma'(r) / sigma(r) - Phi'(r).

``dim_m`` enters only through the exponent of ``sigma`` in the leaf measure and
the drift; it is not tied to the dimension of the discretized flat fiber.
Leaves ``Sigma_r = {r} x N`` are oriented by ``+d/dr`` everywhere, hence the
weighted mean curvature of a leaf is ``drift(r)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, QuadratureError, SingularityError
from .functions import Constant, Expr, Polynomial, from_spec, quadratic

EPSABS = 1e-12
EPSREL = 1e-10


def quad(fn: Callable[[float], float], a: float, b: float, epsabs=EPSABS, epsrel=EPSREL) -> float:
    """Adaptive Gauss-Kronrod quadrature that raises instead of warning."""
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fn, a, b, epsabs=epsabs, epsrel=epsrel, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{a}, {b}] failed: {exc}") from exc
    if not math.isfinite(val) or err > max(epsabs, epsrel * abs(val)) * 10:
        raise QuadratureError(f"quadrature on [{a}, {b}] missed tolerance (err={err:.3e})")
    return val


@dataclass(frozen=True)
class FiberSpec:
    """Flat compact fiber (circle or torus) or a single point.

    ``gamma`` holds one expression per torus axis; the fiber weight is their
    sum, ``Gamma(xi) = sum_k gamma[k](xi_k)``.
    """

    kind: str
    lengths: tuple = ()
    gamma: tuple = ()
    vol_gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("circle", "torus", "point"):
            raise ConfigError(f"unknown fiber kind {self.kind!r}")
        lengths = tuple(float(x) for x in self.lengths)
        if self.kind == "point":
            if lengths or any(not g.is_constant or g(0.0) != 0.0 for g in self.gamma):
                raise ConfigError("point fiber carries no coordinates and Gamma = 0")
            object.__setattr__(self, "lengths", ())
            object.__setattr__(self, "gamma", ())
            object.__setattr__(self, "vol_gamma", 1.0)
            return
        if self.kind == "circle" and len(lengths) != 1:
            raise ConfigError("circle fiber takes exactly one circumference")
        if not lengths or any(L <= 0 for L in lengths):
            raise ConfigError("fiber lengths must be positive")
        gamma = tuple(from_spec(g) for g in self.gamma) or tuple(Constant(0.0) for _ in lengths)
        if len(gamma) != len(lengths):
            raise ConfigError("need one gamma expression per fiber axis")
        for k, (L, g) in enumerate(zip(lengths, gamma)):
            gap = max(abs(g(L) - g(0.0)), abs(g.d1(L) - g.d1(0.0)))
            if gap > 1e-9 * max(1.0, abs(float(g(0.0)))):
                raise ConfigError(f"gamma on axis {k} is not periodic with period {L:g}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "gamma", gamma)
        vol = 1.0
        for L, g in zip(lengths, gamma):
            vol *= quad(lambda x, g=g: float(np.exp(-g(x))), 0.0, L)
        object.__setattr__(self, "vol_gamma", vol)

    @classmethod
    def circle(cls, length: float = 2 * math.pi, gamma: Expr | None = None) -> "FiberSpec":
        return cls("circle", (length,), (gamma,) if gamma is not None else ())

    @classmethod
    def torus(cls, lengths: Sequence[float], gamma: Sequence[Expr] | None = None) -> "FiberSpec":
        return cls("torus", tuple(lengths), tuple(gamma) if gamma else ())

    @classmethod
    def point(cls) -> "FiberSpec":
        return cls("point")

    @property
    def ndim(self) -> int:
        return len(self.lengths)

    def gamma_at(self, coords) -> np.ndarray:
        """``Gamma`` at fiber points, ``coords`` of shape (..., ndim)."""
        coords = np.asarray(coords, dtype=float)
        if self.kind == "point":
            return np.zeros(coords.shape[:-1] if coords.ndim else ())
        return sum(g(coords[..., k]) for k, g in enumerate(self.gamma))

    def spec(self) -> dict:
        return {
            "kind": self.kind,
            "lengths": list(self.lengths),
            "gamma": [g.spec() for g in self.gamma],
        }


@dataclass(frozen=True)
class Coupling:
    """Non-split weight perturbation ``K(r, xi) = radial(r) * angular(xi_0)``.

    Only used to build negative controls: with a coupling the leaves stop
    being weighted-isoparametric and the commutation identities fail.
    """

    radial: Expr
    angular: Expr

    def __call__(self, r, xi0):
        return self.radial(r) * self.angular(xi0)

    def d_r(self, r, xi0):
        return self.radial.d1(r) * self.angular(xi0)

    def d_xi(self, r, xi0):
        return self.radial(r) * self.angular.d1(xi0)

    def spec(self) -> dict:
        return {"radial": self.radial.spec(), "angular": self.angular.spec()}


@dataclass(frozen=True)
class WarpedGeometry:
    dim_m: int
    r1: float
    r2: float
    sigma: Expr
    phi: Expr
    fiber: FiberSpec
    coupling: Coupling | None = None

    def __post_init__(self):
        if int(self.dim_m) != self.dim_m or self.dim_m < 2:
            raise ConfigError("dim_m must be an integer >= 2")
        if not self.r1 < self.r2:
            raise ConfigError(f"need r1 < r2, got [{self.r1}, {self.r2}]")
        object.__setattr__(self, "sigma", from_spec(self.sigma))
        object.__setattr__(self, "phi", from_spec(self.phi))
        probe = np.linspace(self.r1, self.r2, 1001)
        if np.any(~(self.sigma(probe) > 0)):
            raise SingularityError("warping function must be positive on [r1, r2]")

    @property
    def split(self) -> bool:
        return self.coupling is None

    @property
    def width(self) -> float:
        return self.r2 - self.r1

    def with_interval(self, r1: float, r2: float) -> "WarpedGeometry":
        return WarpedGeometry(self.dim_m, r1, r2, self.sigma, self.phi, self.fiber, self.coupling)

    def radial_only(self) -> "WarpedGeometry":
        """Same radial data over a point fiber (the reduced 1D problem)."""
        return WarpedGeometry(self.dim_m, self.r1, self.r2, self.sigma, self.phi, FiberSpec.point())

    def _check_r(self, r):
        r = np.asarray(r, dtype=float)
        tol = 1e-12 * max(1.0, abs(self.r1), abs(self.r2))
        if np.any(r < self.r1 - tol) or np.any(r > self.r2 + tol):
            raise DomainError(f"r outside [{self.r1}, {self.r2}]")
        s = self.sigma(r)
        if np.any(s <= 0):
            raise SingularityError("sigma(r) <= 0")
        return r, s

    def drift(self, r):
        """``(m-1) sigma'/sigma - Phi'`` without range checks."""
        return (self.dim_m - 1) * self.sigma.d1(r) / self.sigma(r) - self.phi.d1(r)

    def log_density(self, r):
        """``log(e^-Phi sigma^(m-1))``."""
        return -self.phi(r) + (self.dim_m - 1) * np.log(self.sigma(r))

    def density(self, r):
        return np.exp(self.log_density(r))

    def psi(self, r, xi):
        """Total weight at ``(r, xi)``; ``xi`` has shape (..., fiber.ndim)."""
        xi = np.asarray(xi, dtype=float)
        val = self.phi(r) + self.fiber.gamma_at(xi)
        if self.coupling is not None:
            val = val + self.coupling(r, xi[..., 0])
        return val

    def spec(self) -> dict:
        out = {
            "dim_m": self.dim_m,
            "r1": self.r1,
            "r2": self.r2,
            "sigma": self.sigma.spec(),
            "phi": self.phi.spec(),
            "fiber": self.fiber.spec(),
        }
        if self.coupling is not None:
            out["coupling"] = self.coupling.spec()
        return out


@dataclass(frozen=True)
class LeafData:
    r: float
    area_psi: float
    h_psi: float


def radial_coefficients(geom: WarpedGeometry, r: float) -> tuple[float, float]:
    """Radial drift and fiber scale ``1/sigma^2`` at ``r``."""
    r, s = geom._check_r(r)
    return float(geom.drift(r)), float(1.0 / s**2)


def leaf_data(geom: WarpedGeometry, r: float) -> LeafData:
    r, _ = geom._check_r(r)
    area = geom.fiber.vol_gamma * float(geom.density(r))
    return LeafData(float(r), area, float(geom.drift(r)))


def annulus_volume(geom: WarpedGeometry, a: float | None = None, b: float | None = None) -> float:
    """Weighted volume of ``[a, b] x N`` (defaults to the whole annulus)."""
    a = geom.r1 if a is None else a
    b = geom.r2 if b is None else b
    geom._check_r(np.array([a, b]))
    return geom.fiber.vol_gamma * quad(lambda r: float(geom.density(r)), a, b)


def gaussian_cylinder_hpsi(t: float) -> float:
    """Weighted mean curvature ``1/t + t`` of the radius-``t`` cylinder in Gaussian space.

    This uses the outward-normal, ``H + <x, nu>`` convention. Under the
    ``+d/dr`` convention of :func:`leaf_data` the same leaf has
    ``h_psi = 1/t - t``; the two differ by ``2 Phi'(t) = 2t``.
    """
    if not t > 0:
        raise DomainError("cylinder radius must be positive")
    return 1.0 / t + t


def log_scaled_integral(logf: Callable[[float], float], a: float, b: float,
                        epsabs=EPSABS, epsrel=EPSREL) -> float:
    """``int_a^b exp(logf(z) - logf(b)) dz`` without forming ``exp(logf)``.

    When the integrand spikes at ``b`` (fast-growing densities) the interval
    is pre-split geometrically toward ``b`` so the spike cannot be missed.
    """
    if b <= a:
        return 0.0
    lb = logf(b)
    fn = lambda z: math.exp(logf(z) - lb)
    if logf(b - (b - a) / 8) - lb > -20.0:
        return quad(fn, a, b, epsabs, epsrel)
    edges = [b - (b - a) * 0.5**k for k in range(0, 40)]
    # the last sliver is short enough for the trapezoid rule
    total = 0.5 * (b - edges[-1]) * (fn(edges[-1]) + 1.0)
    for lo, hi in zip(edges[-2::-1], edges[:0:-1]):
        part = quad(fn, lo, hi, epsabs, epsrel)
        total += part
        if part <= 1e-17 * total and fn(lo) <= 1e-17:
            break
    return total


def volume_growth_diagnostic(geom: WarpedGeometry, r_max: float, r_start: float | None = None) -> float:
    """``int R / vol_Psi(A(r1, R)) dR`` over ``[r_start, r_max]``.

    The integrand blows up like ``1/(R - r1)`` at ``r1``; only the tail
    decides parabolicity, so integration starts at ``r_start`` (default
    ``r1 + (r2 - r1)``). Grow ``r_max`` and watch for divergence.
    """
    r_start = geom.r2 if r_start is None else r_start
    if r_max <= r_start:
        return 0.0
    ext = geom.with_interval(geom.r1, r_max)
    vol0 = annulus_volume(ext, geom.r1, r_start)

    def integrand(R):
        # scaled by rho(R) so fast-growing densities do not overflow
        lR = float(ext.log_density(R))
        ratio = log_scaled_integral(lambda z: float(ext.log_density(z)), r_start, R)
        log_vol = math.log(vol0)
        if ratio > 0:
            log_vol = float(np.logaddexp(log_vol, math.log(ext.fiber.vol_gamma * ratio) + lR))
        return R * math.exp(-log_vol)

    return quad(integrand, r_start, r_max, epsabs=1e-10, epsrel=1e-9)


# catalogue of the domains used throughout tests, demos and scenarios

def flat(r1=0.0, r2=1.0, dim_m=2, fiber: FiberSpec | None = None) -> WarpedGeometry:
    return WarpedGeometry(dim_m, r1, r2, Constant(1.0), Constant(0.0), fiber or FiberSpec.point())


def gaussian_slab(r1=-1.0, r2=1.0, dim_m=2, fiber: FiberSpec | None = None) -> WarpedGeometry:
    """Slab ``[r1, r2]`` of Gaussian space: ``sigma = 1``, ``Phi = r^2/2``."""
    return WarpedGeometry(dim_m, r1, r2, Constant(1.0), quadratic(0.5), fiber or FiberSpec.point())


def polar(r1=1.0, r2=2.0, dim_m=3, fiber: FiberSpec | None = None) -> WarpedGeometry:
    """``sigma(r) = r`` (Euclidean-type annulus)."""
    return WarpedGeometry(dim_m, r1, r2, Polynomial((0.0, 1.0)), Constant(0.0), fiber or FiberSpec.point())
