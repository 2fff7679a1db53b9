"""
Damped Newton solver for ``Delta_Psi u = f(u)`` with constant Dirichlet data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import (
    DiscreteField,
    Grid,
    LinearOperator,
    assemble_laplacian,
    boundary_lift,
    build_grid,
)
from .errors import ConfigError, LinearSolveError, NonConvergence
from .geometry import WarpedGeometry

log = logging.getLogger(__name__)

CONCAVITY = ("concave", "convex", "affine", "none")
PROBES = np.linspace(-3.0, 3.0, 25)


@dataclass(frozen=True)
class Nonlinearity:
    """``f`` with its first two derivatives and structural flags.

    ``lower_bound_B`` is a certified ``B >= 0`` with ``f'(t) >= -B`` on the
    range the solutions visit (for the catalogue entries below it holds for
    every real ``t``), or ``None`` when no such bound is known.
    """

    f: Callable
    df: Callable
    d2f: Callable
    concavity: str = "none"
    lower_bound_B: float | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.concavity not in CONCAVITY:
            raise ConfigError(f"concavity must be one of {CONCAVITY}")
        if self.lower_bound_B is not None and self.lower_bound_B < 0:
            raise ConfigError("lower_bound_B must be >= 0")

    def __call__(self, t):
        return self.f(t)

    def scaled(self, theta: float) -> "Nonlinearity":
        """``theta * f`` (used by continuation)."""
        B = None if self.lower_bound_B is None else theta * self.lower_bound_B
        return Nonlinearity(
            lambda t: theta * self.f(t),
            lambda t: theta * self.df(t),
            lambda t: theta * self.d2f(t),
            self.concavity,
            B,
            f"{self.name}*{theta:g}",
            dict(self.params),
        )

    def check(self, probes=PROBES) -> list[str]:
        """Return the list of violated structural invariants at ``probes``."""
        t = np.asarray(probes, dtype=float)
        problems = []
        eps = np.finfo(float).eps ** (1 / 3)
        for name, g, dg in (("f'", self.f, self.df), ("f''", self.df, self.d2f)):
            fd = (g(t + eps) - g(t - eps)) / (2 * eps)
            scale = 1 + np.abs(dg(t))
            if np.any(np.abs(fd - dg(t)) > 1e3 * eps**2 * scale):
                problems.append(f"{name} disagrees with finite differences")
        if self.concavity == "concave" and np.any(self.d2f(t) > 1e-12):
            problems.append("declared concave but f'' > 0 at a probe")
        if self.concavity == "convex" and np.any(self.d2f(t) < -1e-12):
            problems.append("declared convex but f'' < 0 at a probe")
        if self.concavity == "affine":
            lin = self.f(0.0) + self.df(0.0) * t
            if np.any(np.abs(self.f(t) - lin) > 1e-12 * (1 + np.abs(lin))):
                problems.append("declared affine but f is not linear")
        if self.lower_bound_B is not None and np.any(self.df(t) < -self.lower_bound_B - 1e-12):
            problems.append("f' < -B at a probe")
        return problems

    def spec(self) -> dict:
        return {"kind": self.name, **self.params}


def _arr(t):
    return np.asarray(t, dtype=float)


def zero() -> Nonlinearity:
    z = lambda t: np.zeros_like(_arr(t))
    return Nonlinearity(z, z, z, "affine", 0.0, "zero")


def constant(value: float) -> Nonlinearity:
    z = lambda t: np.zeros_like(_arr(t))
    return Nonlinearity(lambda t: z(t) + value, z, z, "affine", 0.0, "constant", {"value": value})


def affine(slope: float, intercept: float = 0.0) -> Nonlinearity:
    z = lambda t: np.zeros_like(_arr(t))
    return Nonlinearity(
        lambda t: slope * _arr(t) + intercept,
        lambda t: z(t) + slope,
        z,
        "affine",
        max(0.0, -slope),
        "affine",
        {"slope": slope, "intercept": intercept},
    )


def softplus(scale: float, offset: float = 0.0) -> Nonlinearity:
    """Strictly concave ``-scale * log(1 + e^t) + offset`` with ``f' >= -scale``."""
    if scale <= 0:
        raise ConfigError("softplus scale must be positive")
    sig = lambda t: 0.5 * (1.0 + np.tanh(0.5 * _arr(t)))
    return Nonlinearity(
        lambda t: -scale * np.logaddexp(0.0, _arr(t)) + offset,
        lambda t: -scale * sig(t),
        lambda t: -scale * sig(t) * (1.0 - sig(t)),
        "concave",
        scale,
        "softplus",
        {"scale": scale, "offset": offset},
    )


def arctan(a: float, k: float, offset: float = 0.0) -> Nonlinearity:
    """``-a arctan(t) - k t + offset``; concave only for ``t <= 0``."""
    return Nonlinearity(
        lambda t: -a * np.arctan(_arr(t)) - k * _arr(t) + offset,
        lambda t: -a / (1.0 + _arr(t) ** 2) - k,
        lambda t: 2.0 * a * _arr(t) / (1.0 + _arr(t) ** 2) ** 2,
        "none",
        a + k if a >= 0 and k >= 0 else None,
        "arctan",
        {"a": a, "k": k, "offset": offset},
    )


def exponential(coeff: float = -1.0, rate: float = 1.0) -> Nonlinearity:
    """``coeff * e^(rate t)``; concave for ``coeff < 0``, no global bound ``B``."""
    e = lambda t: np.exp(rate * _arr(t))
    return Nonlinearity(
        lambda t: coeff * e(t),
        lambda t: coeff * rate * e(t),
        lambda t: coeff * rate**2 * e(t),
        "concave" if coeff < 0 else "convex",
        0.0 if coeff * rate >= 0 else None,
        "exp",
        {"coeff": coeff, "rate": rate},
    )


def power(coeff: float, exponent: float) -> Nonlinearity:
    """``coeff * t^p`` for ``t > 0`` (manufactured-solution sources)."""
    p = exponent
    return Nonlinearity(
        lambda t: coeff * _arr(t) ** p,
        lambda t: coeff * p * _arr(t) ** (p - 1),
        lambda t: coeff * p * (p - 1) * _arr(t) ** (p - 2),
        "none",
        None,
        "power",
        {"coeff": coeff, "exponent": exponent},
    )


NONLINEARITIES = {
    "zero": zero,
    "constant": constant,
    "affine": affine,
    "softplus": softplus,
    "arctan": arctan,
    "exp": exponential,
    "power": power,
}


def nonlinearity_from_spec(spec) -> Nonlinearity:
    if isinstance(spec, Nonlinearity):
        return spec
    params = {k: v for k, v in spec.items() if k != "kind"}
    kind = spec.get("kind")
    if kind not in NONLINEARITIES:
        raise ConfigError(f"unknown nonlinearity {kind!r}; choose from {sorted(NONLINEARITIES)}")
    try:
        return NONLINEARITIES[kind](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for nonlinearity {kind!r}: {exc}") from exc


@dataclass
class SolveReport:
    solution: DiscreteField
    residual_history: np.ndarray
    newton_iters: int
    converged: bool
    step_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lambda1: float | None = None
    symmetry_defect: float | None = None

    @property
    def residual(self) -> float:
        return float(self.residual_history[-1]) if len(self.residual_history) else math.nan


MAX_ITERS = 50
TOL = 1e-10
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 30


def _residual(op: LinearOperator, f: Nonlinearity, u: np.ndarray, c1: float, c2: float):
    return op.matrix @ u + c1 * op.lift1 + c2 * op.lift2 - f(u)


def newton_solve(
    geom: WarpedGeometry,
    grid: Grid,
    f: Nonlinearity,
    c1: float,
    c2: float,
    u0: DiscreteField | None = None,
    tol: float = TOL,
    max_iters: int = MAX_ITERS,
    op: LinearOperator | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> SolveReport:
    """Solve ``Delta_Psi u = f(u)``, ``u = c1`` at ``r1`` and ``c2`` at ``r2``.

    Each step solves ``(A - diag f'(u)) delta = -(A u + lift - f(u))`` by sparse
    LU and backtracks (factor 1/2) until the 2-norm of the residual drops by
    the Armijo factor. Convergence is measured in the max-norm. ``callback``
    sees every accepted iterate.
    """
    if not tol > 0:
        raise ConfigError("tol must be positive")
    op = op if op is not None else assemble_laplacian(geom, grid)
    u = (u0.values if u0 is not None else boundary_lift(grid, c1, c2).values).astype(float).copy()
    if not np.all(np.isfinite(u)):
        raise ConfigError("initial guess must be finite")

    F = _residual(op, f, u, c1, c2)
    history = [float(np.abs(F).max())]
    steps = []
    if callback:
        callback(0, u)

    def report(converged):
        return SolveReport(DiscreteField(grid, u.copy(), c1, c2), np.array(history),
                           len(steps), converged, np.array(steps))

    for k in range(1, max_iters + 1):
        if history[-1] <= tol:
            return report(True)
        J = (op.matrix - sp.diags(f.df(u))).tocsc()
        try:
            delta = spla.splu(J).solve(-F)
        except RuntimeError as exc:
            raise LinearSolveError(f"Jacobian singular at iteration {k}: {exc}") from exc
        if not np.all(np.isfinite(delta)):
            raise LinearSolveError(f"Jacobian numerically singular at iteration {k}")

        norm0 = np.linalg.norm(F)
        alpha = 1.0
        for _ in range(MAX_BACKTRACKS + 1):
            trial = u + alpha * delta
            F_trial = _residual(op, f, trial, c1, c2)
            norm1 = np.linalg.norm(F_trial)
            if np.isfinite(norm1) and norm1 <= (1 - ARMIJO_C * alpha) * norm0:
                break
            alpha *= 0.5
        else:
            # a full step that lands below roundoff cannot decrease further
            if np.abs(F).max() <= 10 * tol:
                return report(True)
            raise NonConvergence(f"line search failed at iteration {k}", report(False))
        u, F = trial, F_trial
        steps.append(float(alpha * np.abs(delta).max()))
        history.append(float(np.abs(F).max()))
        log.debug("newton %d: alpha=%.3g residual=%.3e", k, alpha, history[-1])
        if callback:
            callback(k, u)

    if history[-1] <= tol:
        return report(True)
    raise NonConvergence(f"no convergence in {max_iters} iterations (residual {history[-1]:.3e})",
                         report(False))


def continuation_solve(
    geom: WarpedGeometry,
    grid: Grid,
    f: Nonlinearity,
    c1: float,
    c2: float,
    steps: int,
    tol: float = TOL,
) -> SolveReport:
    """Homotopy ``theta * f`` for ``theta = 1/steps, ..., 1`` with warm starts."""
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    op = assemble_laplacian(geom, grid)
    u = boundary_lift(grid, c1, c2)
    report = None
    for s in range(1, steps + 1):
        theta = s / steps
        try:
            report = newton_solve(geom, grid, f.scaled(theta) if steps > 1 else f, c1, c2, u, tol, op=op)
        except NonConvergence as exc:
            exc.theta = theta
            raise
        u = report.solution
    return report


def radial_solve(geom: WarpedGeometry, f: Nonlinearity, c1: float, c2: float, n_r: int,
                 tol: float = TOL) -> SolveReport:
    """Solve the reduced ODE ``u'' + drift u' = f(u)`` on a point fiber."""
    g1 = geom.radial_only()
    return newton_solve(g1, build_grid(g1, n_r, 1), f, c1, c2, tol=tol)


def lift_radial(field: DiscreteField, grid: Grid) -> DiscreteField:
    """Extend a radial field to ``grid`` by constancy on leaves."""
    if field.grid.n_r != grid.n_r:
        raise ConfigError("radial field and target grid need the same n_r")
    vals = np.repeat(field.values[:, None], grid.n_fiber, axis=1)
    return DiscreteField(grid, vals, field.c1, field.c2)


def random_initial_guess(grid: Grid, c1: float, c2: float, seed: int, amplitude: float = 1.0) -> DiscreteField:
    """Boundary lift plus a seeded, fiber-dependent perturbation."""
    rng = np.random.default_rng(seed)
    base = boundary_lift(grid, c1, c2)
    R, XI = grid.nodes
    g = grid.geom
    bump = np.sin(np.pi * (R - g.r1) / (g.r2 - g.r1))
    noise = rng.uniform(-1.0, 1.0, grid.shape)
    if grid.fiber_ndim:
        k = rng.integers(1, 4)
        ang = np.cos(2 * np.pi * k * XI[..., 0] / g.fiber.lengths[0] + rng.uniform(0, 2 * np.pi))
        noise = 0.5 * noise + ang
    return base.with_values(base.values + amplitude * (bump * noise).ravel())
