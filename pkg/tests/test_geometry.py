import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from isopde.errors import ConfigError, DomainError, SingularityError
from isopde.functions import Constant, Cos, Cosh, Exp, Power, quadratic
from isopde.geometry import (
    Coupling, FiberSpec, WarpedGeometry, annulus_volume, flat, gaussian_cylinder_hpsi, gaussian_slab,
    leaf_data, log_scaled_integral, polar, quad, radial_coefficients, volume_growth_diagnostic,
)


@pytest.mark.parametrize(
    "geom, r, expected",
    [
        (flat(0.0, 2.0, 3), 1.5, (0.0, 1.0)),
        (gaussian_slab(-1.0, 1.0, 4), 0.7, (-0.7, 1.0)),
        (polar(1.0, 3.0, 3), 2.0, (1.0, 0.25)),
    ],
)
def test_radial_coefficients(geom, r, expected):
    drift, scale = radial_coefficients(geom, r)
    assert drift == pytest.approx(expected[0], abs=1e-14)
    assert scale == pytest.approx(expected[1], abs=1e-14)


def test_radial_coefficients_errors():
    with pytest.raises(DomainError):
        radial_coefficients(flat(0.0, 1.0), 1.5)
    with pytest.raises(SingularityError):
        polar(-1.0, 1.0)


def test_leaf_data_examples():
    cyl = flat(0.0, 1.0, 2, FiberSpec.circle())
    for r in (0.0, 0.3, 1.0):
        ld = leaf_data(cyl, r)
        assert ld.area_psi == pytest.approx(2 * math.pi)
        assert ld.h_psi == pytest.approx(0.0)
    g = gaussian_slab(0.0, 3.0, 5)
    for t in (0.5, 1.0, 2.5):
        assert leaf_data(g, t).h_psi == pytest.approx(-t)
    assert leaf_data(polar(1.0, 4.0, 2, FiberSpec.circle()), 3.0).area_psi == pytest.approx(6 * math.pi)


@given(st.floats(0.2, 1.8), st.integers(2, 5))
@settings(max_examples=30, deadline=None)
def test_leaf_invariants(r, m):
    geom = WarpedGeometry(m, 0.1, 2.0, Cosh(1.0, 0.7), quadratic(0.3), FiberSpec.circle(gamma=Cos(0.4)))
    ld = leaf_data(geom, r)
    rho = math.exp(-0.3 * r * r) * math.cosh(0.7 * r) ** (m - 1)
    assert ld.area_psi == pytest.approx(geom.fiber.vol_gamma * rho, rel=1e-12)
    assert ld.h_psi == pytest.approx((m - 1) * 0.7 * math.tanh(0.7 * r) - 0.6 * r, rel=1e-12, abs=1e-14)


def test_fiber_volume_is_weighted_integral():
    f = FiberSpec.circle(gamma=Cos(0.4))
    # int_0^{2 pi} exp(-0.4 cos x) dx = 2 pi I_0(0.4)
    assert f.vol_gamma == pytest.approx(2 * math.pi * special.i0(0.4), rel=1e-12)
    t = FiberSpec.torus((1.0, 2.0))
    assert t.vol_gamma == pytest.approx(2.0)
    p = FiberSpec.point()
    assert p.vol_gamma == 1.0 and p.ndim == 0


def test_point_fiber_forces_zero_weight():
    with pytest.raises(ConfigError):
        FiberSpec("point", (), (Cos(),))


def test_weight_splits_additively():
    geom = WarpedGeometry(2, 0.0, 1.0, Constant(1.0), quadratic(0.5), FiberSpec.circle(gamma=Cos(0.3)))
    r = np.array([[0.2], [0.7]])
    xi = np.array([[[0.0], [1.0], [2.0]]])
    assert np.allclose(geom.psi(r, xi), 0.5 * r**2 + 0.3 * np.cos(xi[..., 0]))
    assert geom.split
    coupled = WarpedGeometry(2, 0.0, 1.0, 1.0, 0.0, FiberSpec.circle(), Coupling(Power(1.0), Cos()))
    assert not coupled.split


@pytest.mark.parametrize(
    "geom, expected",
    [
        (flat(0.0, 1.0), 1.0),
        (gaussian_slab(0.0, 1.0), math.sqrt(math.pi / 2) * special.erf(1 / math.sqrt(2))),
        (polar(1.0, 2.0, 3, FiberSpec.torus((2 * math.pi, 2.0))), 4 * math.pi * 7 / 3),
    ],
)
def test_annulus_volume(geom, expected):
    assert annulus_volume(geom) == pytest.approx(expected, rel=1e-10)


def test_gaussian_volume_value():
    assert annulus_volume(gaussian_slab(0.0, 1.0)) == pytest.approx(0.855624, abs=1e-6)


def test_gaussian_cylinder_hpsi():
    assert gaussian_cylinder_hpsi(1.0) == pytest.approx(2.0)
    assert gaussian_cylinder_hpsi(2.0) == pytest.approx(2.5)
    t = np.linspace(0.2, 5.0, 4801)
    assert t[np.argmin([gaussian_cylinder_hpsi(x) for x in t])] == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(DomainError):
        gaussian_cylinder_hpsi(0.0)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_gaussian_cylinder_against_leaf_data(t):
    # sigma = r, m = 2, Phi = r^2/2: the leaf computation gives 1/t - t and the
    # closed form counts the weight slope with the opposite sign, a gap of 2 Phi'
    g = WarpedGeometry(2, 0.1, 3.0, Power(1.0), quadratic(0.5), FiberSpec.circle())
    assert gaussian_cylinder_hpsi(t) == pytest.approx(leaf_data(g, t).h_psi + 2 * t)


def test_volume_growth_flat_is_linear():
    g = flat(0.0, 1.0)
    # vol(A(0, R)) = R, integrand 1 on [r2, r_max]
    assert volume_growth_diagnostic(g, 5.0) == pytest.approx(4.0)
    assert volume_growth_diagnostic(g, 9.0) == pytest.approx(8.0)
    assert volume_growth_diagnostic(g, g.r1) == 0.0


def test_volume_growth_gaussian_quadratic():
    g = gaussian_slab(0.0, 1.0)
    big = math.sqrt(math.pi / 2)
    vals = [volume_growth_diagnostic(g, R) for R in (10.0, 20.0)]
    # bounded total volume: integrand ~ R / sqrt(pi/2), integral ~ R^2 / (2 sqrt(pi/2))
    assert vals[1] - vals[0] == pytest.approx((400 - 100) / (2 * big), rel=1e-6)


def test_log_scaled_integral_spike():
    # exp(e^z - e^b) has all its mass in a sliver of width ~e^-b near b
    logf = lambda z: math.exp(z)
    b = 12.0
    val = log_scaled_integral(logf, 0.0, b)
    assert val == pytest.approx(math.exp(-b), rel=1e-4)
    assert log_scaled_integral(lambda z: 0.0, 0.0, 2.0) == pytest.approx(2.0)


def test_quad_wrapper():
    assert quad(math.sin, 0.0, math.pi) == pytest.approx(2.0, rel=1e-12)


def test_geometry_validation():
    with pytest.raises(ConfigError):
        flat(1.0, 0.0)
    with pytest.raises(ConfigError):
        WarpedGeometry(1, 0.0, 1.0, 1.0, 0.0, FiberSpec.point())
    with pytest.raises(SingularityError):
        WarpedGeometry(2, 0.0, 1.0, Power(1.0), 0.0, FiberSpec.point())
    g = WarpedGeometry(2, 0.0, 1.0, Exp(1.0, 1.0), 0.0, FiberSpec.point())
    assert g.with_interval(0.2, 0.5).width == pytest.approx(0.3)


def test_fiber_weight_must_be_periodic():
    with pytest.raises(ConfigError):
        FiberSpec.circle(3.0, Cos(1.0))
    FiberSpec.circle(math.pi, Cos(1.0, 2.0))
