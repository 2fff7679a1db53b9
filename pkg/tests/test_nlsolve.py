import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isopde.discretize import DiscreteField, boundary_lift, build_grid
from isopde.errors import ConfigError, LinearSolveError, NonConvergence
from isopde.geometry import FiberSpec, flat, gaussian_slab, polar
from isopde.harness.runner import loglog_slope
from isopde.nlsolve import (
    NONLINEARITIES, Nonlinearity, affine, arctan, constant, continuation_solve, exponential,
    lift_radial, newton_solve, nonlinearity_from_spec, power, radial_solve, random_initial_guess,
    softplus, zero,
)
from isopde.symmetry import leaf_average

CATALOGUE = [zero(), constant(2.0), affine(-1.0, 1.0), softplus(0.7, 0.2), arctan(1.0, 0.3),
             exponential(-1.0, 1.0), exponential(2.0, 0.5), power(1.0, 3.0)]


@pytest.mark.parametrize("f", CATALOGUE, ids=lambda f: f.name)
def test_catalogue_self_consistent(f):
    assert f.check() == []


def test_check_flags_wrong_derivative_and_concavity():
    bad = Nonlinearity(lambda t: t**2, lambda t: 3 * t, lambda t: 2 + 0 * t, "concave", None, "bad")
    problems = " ".join(bad.check())
    assert "disagrees" in problems and "concave" in problems
    fake_affine = Nonlinearity(np.sin, np.cos, lambda t: -np.sin(t), "affine")
    assert any("affine" in p for p in fake_affine.check())


def test_lower_bounds():
    t = np.linspace(-20, 20, 2001)
    for f in (softplus(0.7), arctan(1.0, 0.3), affine(-2.0)):
        assert np.all(f.df(t) >= -f.lower_bound_B - 1e-12)


def test_from_spec():
    f = nonlinearity_from_spec({"kind": "softplus", "scale": 0.5})
    assert f.name == "softplus" and f.lower_bound_B == 0.5
    assert set(NONLINEARITIES) >= {"zero", "affine", "softplus", "arctan", "exp"}
    with pytest.raises(ConfigError):
        nonlinearity_from_spec({"kind": "quartic"})
    with pytest.raises(ConfigError):
        nonlinearity_from_spec({"kind": "affine", "gradient": 1})
    with pytest.raises(ConfigError):
        softplus(-1.0)


def test_zero_solves_immediately():
    g = build_grid(flat(0.0, 1.0, 2, FiberSpec.circle()), 8, 8)
    rep = newton_solve(g.geom, g, zero(), 0.0, 0.0)
    assert rep.converged and rep.newton_iters == 0
    assert np.all(rep.solution.values == 0)


def test_affine_matches_sinusoid():
    # u'' = -5u, u(0) = 0, u(1) = 1
    k = math.sqrt(5.0)
    hs, errs = [], []
    for n in (16, 32, 64, 128):
        g = build_grid(flat(0.0, 1.0), n)
        rep = newton_solve(g.geom, g, affine(-5.0), 0.0, 1.0)
        errs.append(np.abs(rep.solution.values - np.sin(k * g.r) / math.sin(k)).max())
        hs.append(g.h_r)
    assert loglog_slope(hs, errs) == pytest.approx(2.0, abs=0.1)


def test_manufactured_log_solution():
    # u = log r on [1, 2]: u'' = -1/r^2 = -e^(-2u), so f(t) = -e^(-2t)
    geom = flat(1.0, 2.0)
    f = exponential(-1.0, -2.0)
    hs, errs = [], []
    for n in (16, 32, 64, 128):
        g = build_grid(geom, n)
        rep = newton_solve(geom, g, f, 0.0, math.log(2.0))
        errs.append(np.abs(rep.solution.values - np.log(g.r)).max())
        hs.append(g.h_r)
    assert loglog_slope(hs, errs) == pytest.approx(2.0, abs=0.15)


def test_constant_source_polynomial():
    rep = radial_solve(flat(0.0, 1.0), constant(3.0), 0.0, 0.0, 40)
    r = rep.solution.grid.r
    assert np.abs(rep.solution.values - 3.0 * r * (r - 1) / 2).max() < 1e-10


def test_constant_solution():
    f = affine(-1.0, 0.7)  # f(0.7) = 0
    rep = radial_solve(polar(1.0, 2.0, 3), f, 0.7, 0.7, 20)
    assert np.abs(rep.solution.values - 0.7).max() < 1e-12


def test_residual_history_and_quadratic_convergence():
    geom = gaussian_slab(-1.0, 1.0, 2, FiberSpec.circle())
    g = build_grid(geom, 32, 16)
    u0 = random_initial_guess(g, -1.0, 0.5, seed=3, amplitude=2.0)
    rep = newton_solve(geom, g, softplus(0.3, 1.0), -1.0, 0.5, u0)
    assert rep.converged and rep.residual <= 1e-10
    assert np.all(np.diff(rep.residual_history) < 0)
    d = rep.step_norms
    for a, b in zip(d[:-1], d[1:]):
        if a <= 1e-3 and b > 1e-13:
            assert b <= 10 * a * a


def test_symmetric_iterates_stay_symmetric():
    geom = polar(1.0, 2.0, 3, FiberSpec.circle())
    g = build_grid(geom, 24, 16)
    defects = []

    def watch(k, u):
        field = DiscreteField(g, u)
        defects.append(np.abs(u - leaf_average(geom, g, field).values).max())

    newton_solve(geom, g, softplus(0.5), -0.5, 0.5, callback=watch)
    assert len(defects) > 1 and max(defects) <= 1e-10


def test_radial_lift_matches_2d_solve():
    geom = gaussian_slab(-1.0, 1.0, 2, FiberSpec.circle())
    f = affine(-0.5, 0.2)
    r1d = radial_solve(geom, f, 0.3, -0.4, 30)
    g2 = build_grid(geom, 30, 16)
    r2d = newton_solve(geom, g2, f, 0.3, -0.4, random_initial_guess(g2, 0.3, -0.4, 5))
    lifted = lift_radial(r1d.solution, g2)
    assert np.abs(lifted.values - r2d.solution.values).max() <= 1e-10


@given(st.integers(0, 10_000))
@settings(max_examples=8, deadline=None)
def test_multistart_uniqueness(seed):
    geom = flat(0.0, 1.0, 2, FiberSpec.circle())
    g = build_grid(geom, 16, 16)
    f = softplus(1.0, 0.5)  # B = 1 < b_max = 2
    a = newton_solve(geom, g, f, -0.5, 0.25, random_initial_guess(g, -0.5, 0.25, seed))
    b = newton_solve(geom, g, f, -0.5, 0.25, random_initial_guess(g, -0.5, 0.25, seed + 1))
    assert np.abs(a.solution.values - b.solution.values).max() <= 1e-7


def test_continuation():
    geom = flat(0.0, 1.0)
    g = build_grid(geom, 40)
    f = exponential(-1.0, 1.0)
    one = continuation_solve(geom, g, f, 0.0, 0.0, steps=1)
    direct = newton_solve(geom, g, f, 0.0, 0.0)
    assert np.array_equal(one.solution.values, direct.solution.values)
    many = continuation_solve(geom, g, f, 0.0, 0.0, steps=5)
    assert np.abs(many.solution.values - direct.solution.values).max() < 1e-9
    z = continuation_solve(geom, g, zero(), 1.0, 1.0, steps=4)
    assert np.allclose(z.solution.values, 1.0)
    with pytest.raises(ConfigError):
        continuation_solve(geom, g, f, 0.0, 0.0, steps=0)


def test_continuation_reaches_harder_problem():
    # Bratu-type u'' = -lam e^u close to the fold; the continuation log ends converged
    geom = flat(0.0, 1.0)
    g = build_grid(geom, 64)
    f = exponential(-3.4, 1.0)
    rep = continuation_solve(geom, g, f, 0.0, 0.0, steps=8)
    assert rep.converged


def test_nonconvergence_carries_report():
    geom = flat(0.0, 1.0)
    g = build_grid(geom, 32)
    with pytest.raises(NonConvergence) as info:
        newton_solve(geom, g, exponential(-1.0, 1.0), 0.0, 0.0, max_iters=1, tol=1e-14)
    assert info.value.report is not None and not info.value.report.converged
    with pytest.raises(NonConvergence) as info:
        continuation_solve(geom, g, exponential(-20.0, 1.0), 0.0, 0.0, steps=2)
    assert info.value.theta in (0.5, 1.0)


def test_singular_jacobian():
    # f(t) = -lam t with lam the discrete eigenvalue makes the Jacobian singular
    geom = flat(0.0, 1.0)
    g = build_grid(geom, 7)
    lam = 4 * math.sin(math.pi * g.h_r / 2) ** 2 / g.h_r**2
    with pytest.raises((LinearSolveError, NonConvergence)):
        newton_solve(geom, g, affine(-lam), 0.0, 1.0)


def test_bad_inputs():
    g = build_grid(flat(0.0, 1.0), 8)
    with pytest.raises(ConfigError):
        newton_solve(g.geom, g, zero(), 0.0, 0.0, tol=0.0)
    with pytest.raises(ConfigError):
        newton_solve(g.geom, g, zero(), 0.0, 0.0, DiscreteField(g, np.full(8, np.nan)))


def test_random_guess_deterministic_and_asymmetric():
    g = build_grid(flat(0.0, 1.0, 2, FiberSpec.circle()), 10, 16)
    a = random_initial_guess(g, 0.0, 1.0, 42)
    b = random_initial_guess(g, 0.0, 1.0, 42)
    assert np.array_equal(a.values, b.values)
    assert np.ptp(a.as_array(), axis=1).max() > 0.1
    assert (a.c1, a.c2) == (0.0, 1.0)
    assert np.allclose(boundary_lift(g, 0.0, 1.0).as_array()[:, 0], g.r)
