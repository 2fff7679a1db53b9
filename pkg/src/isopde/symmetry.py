"""
Leaf averages, symmetry defects and commutation residuals.

Two kinds of input are accepted by the residual functions:

* a :class:`DiscreteField` gives the purely discrete commutator. On split
  weights it vanishes to roundoff, because the conservative fiber stencil sums
  to zero on every leaf and is circulant along each fiber axis.
* a callable ``u(r, xi)`` (a manufactured field) compares the discrete side
  with the exact continuous side, so the residual measures how well the
  continuous identity is reproduced: O(h^2) when the identity holds, O(1)
  when it fails (non-split weights, non-Killing fiber weights).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .discretize import (
    DiscreteField,
    Grid,
    apply,
    apply_to_function,
    assemble_laplacian,
)
from .errors import PreconditionError, ShapeError
from .geometry import WarpedGeometry

log = logging.getLogger(__name__)

FD_STEP = 1e-3
FINE_FIBER = 256


@dataclass(frozen=True)
class SymmetryReport:
    defect_inf: float
    defect_l2: float
    tangential_grad_max: float
    commutation_residual: float
    volume: float

    def as_dict(self) -> dict:
        return {
            "defect_inf": self.defect_inf,
            "defect_l2": self.defect_l2,
            "tangential_grad_max": self.tangential_grad_max,
            "commutation_residual": self.commutation_residual,
        }


def _check_grid(grid: Grid, u: DiscreteField):
    if u.values.size != grid.size:
        raise ShapeError("field does not match grid")


def leaf_average(geom: WarpedGeometry, grid: Grid, u: DiscreteField) -> DiscreteField:
    """Gamma-weighted mean of ``u`` over each leaf, broadcast back onto the leaf.

    On a point fiber every function is symmetric and ``u`` is returned as is.
    """
    _check_grid(grid, u)
    if grid.fiber_ndim == 0:
        log.info("leaf_average on a point fiber is the identity")
        return u.copy()
    a = u.as_array()
    mean = np.sum(grid.leaf_weights * a, axis=1, keepdims=True)
    return u.with_values(np.broadcast_to(mean, grid.shape))


def _interior_rows(grid: Grid, layers: int = 2) -> slice:
    return slice(layers, grid.n_r - layers)


def _fd1(fn, x, h):
    return (fn(x - 2 * h) - 8 * fn(x - h) + 8 * fn(x + h) - fn(x + 2 * h)) / (12 * h)


def _fd2(fn, x, h):
    return (-fn(x - 2 * h) + 16 * fn(x - h) - 30 * fn(x) + 16 * fn(x + h) - fn(x + 2 * h)) / (12 * h * h)


def _axis_shift(XI, axis, d):
    XI = np.array(XI, dtype=float, copy=True)
    XI[..., axis] += d
    return XI


def pointwise_laplacian(geom: WarpedGeometry, fn: Callable, R, XI, step: float = FD_STEP):
    """``Delta_Psi fn`` at points, with exact coefficients and 4th-order differences of ``fn``.

    Independent of the assembled stencil; used as the continuous reference.
    """
    R = np.asarray(R, dtype=float)
    XI = np.asarray(XI, dtype=float)
    u_r = _fd1(lambda r: fn(r, XI), R, step)
    u_rr = _fd2(lambda r: fn(r, XI), R, step)
    drift = geom.drift(R)
    if geom.coupling is not None:
        drift = drift - geom.coupling.d_r(R, XI[..., 0])
    out = u_rr + drift * u_r
    sig2 = geom.sigma(R) ** 2
    for k, g in enumerate(geom.fiber.gamma):
        along = lambda x, k=k: fn(R, _axis_shift(XI, k, x))
        u_k = _fd1(along, 0.0, step)
        u_kk = _fd2(along, 0.0, step)
        slope = g.d1(XI[..., k])
        if k == 0 and geom.coupling is not None:
            slope = slope + geom.coupling.d_xi(R, XI[..., 0])
        out = out + (u_kk - slope * u_k) / sig2
    return out


def continuous_leaf_average(geom: WarpedGeometry, fn: Callable, r, n_fine: int = FINE_FIBER):
    """Weighted fiber mean of ``fn(r, .)`` by the periodic trapezoid rule on a fine grid."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    fiber = geom.fiber
    if fiber.ndim == 0:
        return fn(r[:, None], np.zeros((1, 1, 0)))[:, 0]
    n = n_fine if fiber.ndim == 1 else max(32, int(round(n_fine ** (1 / fiber.ndim))) * 2)
    axes = [np.arange(n) * L / n for L in fiber.lengths]
    xi = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    R = r[:, None]
    XI = xi[None, :, :]
    psi = geom.psi(R, XI)
    w = np.exp(-(psi - psi.min(axis=1, keepdims=True)))
    vals = np.broadcast_to(fn(R, XI), w.shape)
    return np.sum(w * vals, axis=1) / np.sum(w, axis=1)


def commutation_residual(geom: WarpedGeometry, grid: Grid, u) -> float:
    """``max |A(Delta_Psi u) - Delta_Psi(A u)|`` two layers away from the boundary.

    For a callable ``u`` the left side is fully discrete and the right side is
    the continuous operator applied to the continuous leaf average.
    """
    op = assemble_laplacian(geom, grid)
    rows = _interior_rows(grid)
    if isinstance(u, DiscreteField):
        _check_grid(grid, u)
        lhs = leaf_average(geom, grid, apply(op, u)).as_array()
        rhs = apply(op, leaf_average(geom, grid, u)).as_array()
        return float(np.abs(lhs - rhs)[rows].max())

    lap = DiscreteField(grid, apply_to_function(op, u))
    lhs = leaf_average(geom, grid, lap).as_array()
    avg = lambda r, xi: continuous_leaf_average(geom, u, np.ravel(r)).reshape(np.shape(r))
    R, XI = grid.nodes
    rhs = pointwise_laplacian(geom, lambda r, xi: avg(r, xi), R, XI)
    rhs = np.broadcast_to(rhs, grid.shape)
    return float(np.abs(lhs - rhs)[rows].max())


def fiber_derivative(grid: Grid, u: DiscreteField, axis: int = 0) -> DiscreteField:
    """Centered periodic difference along a fiber axis (same stencil width as assembly)."""
    _check_grid(grid, u)
    if grid.fiber_ndim == 0:
        return u.with_values(np.zeros(grid.size))
    h = grid.spacings[axis]
    j = np.arange(grid.n_fiber)
    a = u.as_array()
    jp = grid.fiber_neighbor(j, axis, +1)
    jm = grid.fiber_neighbor(j, axis, -1)
    # boundary data is constant on leaves, so its fiber derivative is zero
    return DiscreteField(grid, (a[:, jp] - a[:, jm]) / (2 * h), 0.0, 0.0)


def killing_admissible(geom: WarpedGeometry, axis: int = 0, tol: float = 1e-12) -> bool:
    """True if ``g(d/dxi, grad Psi) = d Gamma / d xi`` is constant on the fiber."""
    if geom.fiber.ndim == 0:
        return True
    L = geom.fiber.lengths[axis]
    x = np.linspace(0.0, L, 513)
    slope = geom.fiber.gamma[axis].d1(x)
    if geom.coupling is not None and axis == 0:
        r = np.linspace(geom.r1, geom.r2, 33)[:, None]
        slope = slope[None, :] + geom.coupling.d_xi(r, x[None, :])
    return bool(np.ptp(slope) <= tol)


def killing_commutation_residual(geom: WarpedGeometry, grid: Grid, u, axis: int = 0,
                                 check: bool = True) -> float:
    """``max |Delta_Psi(X u) - X(Delta_Psi u)|`` for the rotation field ``X = d/dxi``.

    For a callable ``u``: discrete ``Delta_Psi`` of the exact ``X u`` against
    the exact ``X`` of the continuous ``Delta_Psi u``. Set ``check=False`` to
    run on inadmissible weights (negative controls).
    """
    if grid.fiber_ndim == 0:
        raise PreconditionError("Killing field needs a circle or torus fiber")
    if check and not killing_admissible(geom, axis):
        raise PreconditionError("d Gamma / d xi is not constant; X is not a weighted Killing field")
    op = assemble_laplacian(geom, grid)
    rows = _interior_rows(grid)
    if isinstance(u, DiscreteField):
        lhs = apply(op, fiber_derivative(grid, u, axis)).as_array()
        rhs = fiber_derivative(grid, apply(op, u), axis).as_array()
        return float(np.abs(lhs - rhs)[rows].max())

    step = 10 * FD_STEP
    xu = lambda r, xi: _fd1(lambda x: u(r, _axis_shift(xi, axis, x)), 0.0, FD_STEP)
    lhs = apply_to_function(op, xu).reshape(grid.shape)
    R, XI = grid.nodes
    lap = lambda x: pointwise_laplacian(geom, u, R, _axis_shift(np.broadcast_to(XI, grid.shape + (grid.fiber_ndim,)), axis, x))
    rhs = _fd1(lap, 0.0, step)
    return float(np.abs(lhs - rhs)[rows].max())


def tangential_gradient(geom: WarpedGeometry, grid: Grid, u: DiscreteField) -> np.ndarray:
    """``max_k |d_k u| / sigma`` at every node: the local-symmetry diagnostic."""
    if grid.fiber_ndim == 0:
        return np.zeros(grid.shape)
    sig = geom.sigma(grid.r)[:, None]
    out = np.zeros(grid.shape)
    for k in range(grid.fiber_ndim):
        out = np.maximum(out, np.abs(fiber_derivative(grid, u, k).as_array()) / sig)
    return out


def symmetry_report(geom: WarpedGeometry, grid: Grid, u: DiscreteField) -> SymmetryReport:
    _check_grid(grid, u)
    w = grid.weights
    defect = u.values - leaf_average(geom, grid, u).values
    return SymmetryReport(
        defect_inf=float(np.abs(defect).max()),
        defect_l2=float(np.sqrt(np.sum(w * defect**2))),
        tangential_grad_max=float(tangential_gradient(geom, grid, u).max()),
        commutation_residual=commutation_residual(geom, grid, u) if grid.n_r > 4 else 0.0,
        volume=float(w.sum()),
    )


def weighted_inner(grid: Grid, u, v) -> float:
    u = u.values if isinstance(u, DiscreteField) else u
    v = v.values if isinstance(v, DiscreteField) else v
    return float(np.sum(grid.weights * u * v))


def killing_integral_identity(geom: WarpedGeometry, grid: Grid, u: DiscreteField, axis: int = 0):
    """``(int X u dv_Psi, g(grad Psi, X) int u dv_Psi)``; equal when ``X`` is admissible."""
    if not killing_admissible(geom, axis):
        raise PreconditionError("identity needs d Gamma / d xi constant")
    slope = float(geom.fiber.gamma[axis].d1(0.0))
    lhs = weighted_inner(grid, fiber_derivative(grid, u, axis), np.ones(grid.size))
    rhs = slope * weighted_inner(grid, u, np.ones(grid.size))
    return lhs, rhs
