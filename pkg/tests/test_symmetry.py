import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isopde.discretize import DiscreteField, build_grid, sample
from isopde.errors import PreconditionError, ShapeError
from isopde.functions import Cos, Power, Sin
from isopde.geometry import Coupling, FiberSpec, WarpedGeometry, flat, gaussian_slab, polar
from isopde.harness.runner import loglog_slope
from isopde.symmetry import (
    commutation_residual, continuous_leaf_average, fiber_derivative, killing_admissible,
    killing_commutation_residual, killing_integral_identity, leaf_average, pointwise_laplacian,
    symmetry_report, tangential_gradient, weighted_inner,
)

SPLIT = WarpedGeometry(2, 1.0, 2.0, Power(1.0), {"kind": "quadratic", "coeff": 0.5}, FiberSpec.circle())
COUPLED = WarpedGeometry(2, 1.0, 2.0, Power(1.0), {"kind": "quadratic", "coeff": 0.5}, FiberSpec.circle(),
                         Coupling(Power(1.0), Sin()))
NON_KILLING = WarpedGeometry(2, 1.0, 2.0, Power(1.0), {"kind": "quadratic", "coeff": 0.5},
                             FiberSpec.circle(gamma=Cos()))


def manufactured(r, xi):
    return np.exp(r) + np.cos(2 * r) * np.sin(xi[..., 0])


def test_leaf_average_examples():
    g = build_grid(SPLIT, 10, 16)
    const = sample(g, lambda r, xi: np.sin(r) + 0 * xi[..., 0])
    assert np.abs(leaf_average(SPLIT, g, const).values - const.values).max() < 1e-15
    s = sample(g, lambda r, xi: np.sin(xi[..., 0]))
    assert np.abs(leaf_average(SPLIT, g, s).values).max() < 1e-15
    mixed = sample(g, lambda r, xi: r**2 + np.sin(xi[..., 0]))
    assert np.allclose(leaf_average(SPLIT, g, mixed).as_array(), (g.r**2)[:, None], atol=1e-14)


def test_leaf_average_point_fiber_identity():
    g = build_grid(flat(0.0, 1.0), 10)
    u = sample(g, lambda r, xi: r**3)
    assert np.array_equal(leaf_average(g.geom, g, u).values, u.values)


def test_leaf_average_weighted():
    geom = flat(0.0, 1.0, 2, FiberSpec.circle(gamma=Cos(0.8)))
    g = build_grid(geom, 5, 64)
    u = sample(g, lambda r, xi: np.cos(xi[..., 0]) + 0 * r)
    # weighted mean of cos under e^{-0.8 cos}: -I_1(0.8)/I_0(0.8)
    from scipy.special import i0, i1

    assert np.allclose(leaf_average(geom, g, u).values, -i1(0.8) / i0(0.8), atol=1e-12)
    cont = continuous_leaf_average(geom, lambda r, xi: np.cos(xi[..., 0]) + 0 * r, [0.5])
    assert cont[0] == pytest.approx(-i1(0.8) / i0(0.8), abs=1e-12)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_projection_properties(seed):
    geom = WarpedGeometry(2, 1.0, 2.0, Power(1.0), 0.0, FiberSpec.circle(gamma=Cos(0.6)))
    g = build_grid(geom, 8, 16)
    u = DiscreteField(g, np.random.default_rng(seed).standard_normal(g.size))
    Au = leaf_average(geom, g, u)
    AAu = leaf_average(geom, g, Au)
    assert np.abs(AAu.values - Au.values).max() <= 1e-12
    ortho = weighted_inner(g, u.values - Au.values, Au.values)
    assert abs(ortho) <= 1e-12 * weighted_inner(g, u, u)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=15, deadline=None)
def test_discrete_commutators_vanish_for_split_weights(seed):
    g = build_grid(SPLIT, 12, 16)
    u = DiscreteField(g, np.random.default_rng(seed).standard_normal(g.size), 0.3, -0.2)
    assert commutation_residual(SPLIT, g, u) <= 1e-10
    assert killing_commutation_residual(SPLIT, g, u) <= 1e-9


def test_leaf_constant_commutators_zero():
    g = build_grid(SPLIT, 12, 16)
    u = sample(g, lambda r, xi: np.exp(r) + 0 * xi[..., 0])
    assert commutation_residual(SPLIT, g, u) < 1e-10
    assert killing_commutation_residual(SPLIT, g, u) < 1e-10


def _study(fn, geom, **kw):
    hs, res = [], []
    for n_r, n_f in ((32, 16), (64, 32), (128, 64)):
        g = build_grid(geom, n_r, n_f)
        res.append(fn(geom, g, manufactured, **kw))
        hs.append(g.h_r)
    return hs, res


def test_commutation_refinement_and_negative_control():
    hs, res = _study(commutation_residual, SPLIT)
    assert loglog_slope(hs, res) == pytest.approx(2.0, abs=0.4)
    _, bad = _study(commutation_residual, COUPLED)
    assert min(bad) > 1.0 and bad[0] / bad[-1] < 2.0


def test_killing_refinement_and_negative_control():
    assert killing_admissible(SPLIT) and not killing_admissible(NON_KILLING)
    hs, res = _study(killing_commutation_residual, SPLIT)
    assert loglog_slope(hs, res) == pytest.approx(2.0, abs=0.4)
    _, bad = _study(killing_commutation_residual, NON_KILLING, check=False)
    assert min(bad) > 0.1 and bad[0] / bad[-1] < 2.0
    with pytest.raises(PreconditionError):
        killing_commutation_residual(NON_KILLING, build_grid(NON_KILLING, 10, 16), manufactured)
    with pytest.raises(PreconditionError):
        killing_commutation_residual(flat(0.0, 1.0), build_grid(flat(0.0, 1.0), 10), manufactured)


def test_pointwise_laplacian_oracle():
    # sigma = r, Phi = r^2/2, m = 2: drift = 1/r - r, fiber term -cos(xi) since sigma^2 = r^2
    R = np.array([[1.3], [1.7]])
    XI = np.array([[[0.4], [2.0]]])
    u = lambda r, xi: r**2 * np.cos(xi[..., 0])
    exact = (2 + (1 / R - R) * 2 * R) * np.cos(XI[..., 0]) - np.cos(XI[..., 0])
    assert np.allclose(pointwise_laplacian(SPLIT, u, R, XI), exact, atol=1e-8)


def test_symmetry_report_examples():
    g = build_grid(SPLIT, 10, 16)
    zero_rep = symmetry_report(SPLIT, g, sample(g, lambda r, xi: r + 0 * xi[..., 0]))
    assert zero_rep.defect_inf < 1e-15 and zero_rep.tangential_grad_max < 1e-14
    s = sample(g, lambda r, xi: np.sin(xi[..., 0]) + 0 * r)
    rep = symmetry_report(SPLIT, g, s)
    assert rep.defect_inf == pytest.approx(np.abs(np.sin(g.xi[:, 0])).max())
    # centered difference of sin on the grid: sin(h) cos(xi) / h
    h = g.spacings[0]
    expected = (np.sin(h) / h) * np.abs(np.cos(g.xi[:, 0])).max() / g.r.min()
    assert rep.tangential_grad_max == pytest.approx(expected)
    assert rep.defect_l2 <= rep.defect_inf * math.sqrt(rep.volume)
    for eps in (1e-3, 0.5, 4.0):
        scaled = symmetry_report(SPLIT, g, s.with_values(eps * s.values))
        assert scaled.defect_inf == pytest.approx(eps * rep.defect_inf)
        assert scaled.defect_l2 == pytest.approx(eps * rep.defect_l2)
        assert scaled.tangential_grad_max == pytest.approx(eps * rep.tangential_grad_max)
    assert set(rep.as_dict()) == {"defect_inf", "defect_l2", "tangential_grad_max", "commutation_residual"}


def test_killing_integral_identity():
    geom = WarpedGeometry(2, 1.0, 2.0, Power(1.0), 0.0, FiberSpec.circle())
    g = build_grid(geom, 16, 32)
    u = sample(g, lambda r, xi: np.sin(np.pi * (r - 1)) * (2 + np.sin(xi[..., 0])))
    lhs, rhs = killing_integral_identity(geom, g, u)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    with pytest.raises(PreconditionError):
        killing_integral_identity(NON_KILLING, build_grid(NON_KILLING, 8, 16), u)


def test_fiber_derivative_and_tangential_gradient():
    g = build_grid(SPLIT, 8, 64)
    u = sample(g, lambda r, xi: np.sin(xi[..., 0]) + 0 * r)
    d = fiber_derivative(g, u).as_array()
    assert np.abs(d - np.cos(g.xi[:, 0])).max() < 2e-3
    tg = tangential_gradient(SPLIT, g, u)
    assert tg.shape == g.shape and np.all(tg >= 0)
    pg = build_grid(flat(0.0, 1.0), 5)
    assert np.all(fiber_derivative(pg, sample(pg, lambda r, xi: r)).values == 0)


def test_shape_errors():
    g = build_grid(SPLIT, 8, 16)
    other = build_grid(SPLIT, 9, 16)
    with pytest.raises(ShapeError):
        leaf_average(SPLIT, g, DiscreteField(other, np.zeros(other.size)))
