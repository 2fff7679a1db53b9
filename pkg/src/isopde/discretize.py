"""
Tensor grids on ``[r1, r2] x N`` and conservative finite-difference operators.

Unknowns live on interior radial nodes ``r_i = r1 + i h_r`` (``i = 1..n_r``)
times a uniform periodic fiber grid; the two boundary leaves are eliminated
into lift vectors. Both directions use the flux form

    (1 / mu_i) [mu_{i+1/2} (u_{i+1} - u_i) - mu_{i-1/2} (u_i - u_{i-1})] / h^2

with ``mu = exp(-Psi) sigma^(m-1)`` sampled at half nodes. Expanded, this is
the centered second difference plus a centered drift term up to O(h^2), and it
makes ``diag(w) A`` exactly symmetric for the nodal weights
``w = mu h_r h_f`` used for every discrete integral in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ShapeError, SingularityError
from .geometry import WarpedGeometry

PECLET_MAX = 2.0


@dataclass(frozen=True, eq=False)
class Grid:
    geom: WarpedGeometry
    n_r: int
    n_f: int

    def __post_init__(self):
        fiber = self.geom.fiber
        errors = []
        if int(self.n_r) != self.n_r or self.n_r < 3:
            errors.append(f"n_r must be an integer >= 3, got {self.n_r}")
        if fiber.kind == "point" and self.n_f != 1:
            errors.append(f"point fiber needs n_f = 1, got {self.n_f}")
        if fiber.kind != "point" and self.n_f < 8:
            errors.append(f"periodic fiber needs n_f >= 8, got {self.n_f}")
        if errors:
            raise ConfigError(errors)

    @property
    def h_r(self) -> float:
        return (self.geom.r2 - self.geom.r1) / (self.n_r + 1)

    @property
    def spacings(self) -> tuple:
        """Fiber spacing along each torus axis (empty for a point fiber)."""
        return tuple(L / self.n_f for L in self.geom.fiber.lengths)

    @property
    def h_f(self) -> float:
        """Fiber cell measure: the spacing on a circle, 1 on a point fiber."""
        return float(np.prod(self.spacings)) if self.spacings else 1.0

    @property
    def fiber_ndim(self) -> int:
        return self.geom.fiber.ndim

    @property
    def n_fiber(self) -> int:
        return self.n_f ** self.fiber_ndim

    @property
    def size(self) -> int:
        return self.n_r * self.n_fiber

    @property
    def shape(self) -> tuple:
        return (self.n_r, self.n_fiber)

    @cached_property
    def r(self) -> np.ndarray:
        return self.geom.r1 + self.h_r * np.arange(1, self.n_r + 1)

    @cached_property
    def xi(self) -> np.ndarray:
        """Fiber node coordinates, shape ``(n_fiber, ndim)``; axis 0 varies slowest."""
        d = self.fiber_ndim
        if d == 0:
            return np.zeros((1, 0))
        axes = [np.arange(self.n_f) * h for h in self.spacings]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def nodes(self) -> tuple:
        """Broadcast-ready ``(R, XI)`` with shapes ``(n_r, 1)`` and ``(1, n_fiber, ndim)``."""
        return self.r[:, None], self.xi[None, :, :]

    def index(self, i, j):
        return np.asarray(i) * self.n_fiber + np.asarray(j)

    def unindex(self, k):
        return np.divmod(np.asarray(k), self.n_fiber)

    def fiber_neighbor(self, j, axis: int, step: int):
        """Periodic neighbor of fiber node ``j`` along ``axis``."""
        d = self.fiber_ndim
        multi = list(np.unravel_index(np.asarray(j), (self.n_f,) * d))
        multi[axis] = (multi[axis] + step) % self.n_f
        return np.ravel_multi_index(multi, (self.n_f,) * d)

    @cached_property
    def log_mu(self) -> np.ndarray:
        """``-Psi + (m-1) log sigma`` at nodes, shape ``(n_r, n_fiber)``."""
        R, XI = self.nodes
        return _log_mu(self.geom, R, XI)

    @cached_property
    def weights(self) -> np.ndarray:
        """Nodal quadrature weights ``e^-Psi sigma^(m-1) h_r h_f`` (flat)."""
        return (np.exp(self.log_mu) * self.h_r * self.h_f).ravel()

    @cached_property
    def leaf_weights(self) -> np.ndarray:
        """Per-leaf weights ``e^-Psi`` normalized to sum 1 along each leaf."""
        g = np.exp(self.log_mu - self.log_mu.max(axis=1, keepdims=True))
        return g / g.sum(axis=1, keepdims=True)


def build_grid(geom: WarpedGeometry, n_r: int, n_f: int = 1) -> Grid:
    return Grid(geom, n_r, n_f)


def _log_mu(geom: WarpedGeometry, R, XI):
    return -geom.psi(R, XI) + (geom.dim_m - 1) * np.log(geom.sigma(R))


@dataclass(eq=False)
class DiscreteField:
    grid: Grid
    values: np.ndarray
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.size:
            raise ShapeError(f"field has {self.values.size} values, grid needs {self.grid.size}")

    def as_array(self) -> np.ndarray:
        """Values as ``(n_r, n_fiber)``."""
        return self.values.reshape(self.grid.shape)

    def with_values(self, values) -> "DiscreteField":
        return DiscreteField(self.grid, values, self.c1, self.c2)

    def copy(self) -> "DiscreteField":
        return DiscreteField(self.grid, self.values.copy(), self.c1, self.c2)


def sample(grid: Grid, fn: Callable, c1: float = 0.0, c2: float = 0.0) -> DiscreteField:
    """Evaluate ``fn(r, xi)`` on interior nodes; ``xi`` has shape (..., ndim)."""
    R, XI = grid.nodes
    vals = np.broadcast_to(fn(R, XI), grid.shape)
    return DiscreteField(grid, vals, c1, c2)


def boundary_lift(grid: Grid, c1: float, c2: float) -> DiscreteField:
    """Field linear in ``r`` matching the boundary data; constant on leaves."""
    g = grid.geom
    t = (grid.r - g.r1) / (g.r2 - g.r1)
    vals = np.repeat((c1 + (c2 - c1) * t)[:, None], grid.n_fiber, axis=1)
    return DiscreteField(grid, vals, c1, c2)


@dataclass(eq=False)
class LinearOperator:
    """Sparse operator on interior unknowns plus its Dirichlet lift.

    ``apply(u) = matrix @ u + c1 * lift1 + c2 * lift2``.
    """

    grid: Grid
    matrix: sp.csr_matrix
    lift1: np.ndarray
    lift2: np.ndarray
    weights: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.matrix.shape

    def weighted_matrix(self) -> sp.csr_matrix:
        return sp.diags(self.weights) @ self.matrix

    def symmetry_defect(self) -> float:
        """``max |WA - (WA)^T| / max |WA|``."""
        wa = self.weighted_matrix().tocsr()
        diff = (wa - wa.T).tocsr()
        scale = np.abs(wa.data).max()
        return float(np.abs(diff.data).max() / scale) if diff.nnz else 0.0

    def shifted(self, q) -> "LinearOperator":
        """``A - diag(q)``."""
        q = np.asarray(q, dtype=float).ravel()
        return LinearOperator(self.grid, (self.matrix - sp.diags(q)).tocsr(),
                              self.lift1, self.lift2, self.weights)


def _check_peclet(grid: Grid):
    geom = grid.geom
    R, XI = grid.nodes
    r_half = np.concatenate([[geom.r1], grid.r, [geom.r2]])
    peclet = grid.h_r * np.abs(geom.drift(r_half)).max()
    problems = []
    if peclet >= PECLET_MAX:
        problems.append(f"radial cell Peclet number {peclet:.3g} >= {PECLET_MAX}; refine n_r")
    if geom.coupling is not None:
        d_r = np.abs(geom.coupling.d_r(R, XI[..., 0])).max()
        if grid.h_r * (np.abs(geom.drift(grid.r)).max() + d_r) >= PECLET_MAX:
            problems.append("radial cell Peclet number too large with coupling; refine n_r")
    for k, (g, h) in enumerate(zip(geom.fiber.gamma, grid.spacings)):
        slope = np.abs(g.d1(grid.xi[:, k])).max()
        if k == 0 and geom.coupling is not None:
            slope = slope + np.abs(geom.coupling.d_xi(R, XI[..., 0])).max()
        if h * slope >= PECLET_MAX:
            problems.append(f"fiber cell Peclet number too large on axis {k}; refine n_f")
    if problems:
        raise ConfigError(problems)


def assemble_laplacian(geom: WarpedGeometry, grid: Grid) -> LinearOperator:
    """Conservative second-order discretization of ``Delta_Psi`` with Dirichlet lift."""
    if grid.geom is not geom and grid.geom != geom:
        raise ShapeError("grid was built for a different geometry")
    sig = geom.sigma(grid.r)
    if np.any(sig <= 0):
        raise SingularityError("sigma vanishes on a grid node")
    _check_peclet(grid)

    n_r, n_fib = grid.shape
    N = grid.size
    R, XI = grid.nodes
    log_mu = grid.log_mu
    idx = np.arange(N).reshape(n_r, n_fib)
    rows, cols, vals = [], [], []
    diag = np.zeros((n_r, n_fib))
    lift1 = np.zeros((n_r, n_fib))
    lift2 = np.zeros((n_r, n_fib))

    up, down = _radial_fluxes(geom, grid)
    diag -= up + down
    rows.append(idx[:-1].ravel()); cols.append(idx[1:].ravel()); vals.append(up[:-1].ravel())
    rows.append(idx[1:].ravel()); cols.append(idx[:-1].ravel()); vals.append(down[1:].ravel())
    lift1[0] = down[0]
    lift2[-1] = up[-1]

    # fiber fluxes, one periodic direction per torus axis
    j = np.arange(n_fib)
    for axis, hf in enumerate(grid.spacings):
        shift = np.zeros(grid.fiber_ndim)
        shift[axis] = hf / 2
        scale = 1.0 / (sig[:, None] ** 2 * hf**2)
        fwd = np.exp(_log_mu(geom, R, XI + shift) - log_mu) * scale
        bwd = np.exp(_log_mu(geom, R, XI - shift) - log_mu) * scale
        diag -= fwd + bwd
        jp = grid.fiber_neighbor(j, axis, +1)
        jm = grid.fiber_neighbor(j, axis, -1)
        rows.append(idx.ravel()); cols.append(idx[:, jp].ravel()); vals.append(fwd.ravel())
        rows.append(idx.ravel()); cols.append(idx[:, jm].ravel()); vals.append(bwd.ravel())

    rows.append(idx.ravel()); cols.append(idx.ravel()); vals.append(diag.ravel())
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    ).tocsr()
    A.sum_duplicates()
    return LinearOperator(grid, A, lift1.ravel(), lift2.ravel(), grid.weights)


def assemble_schrodinger(geom: WarpedGeometry, grid: Grid, q) -> LinearOperator:
    """``L = Delta_Psi - q``; ``q`` is a field, an array or a scalar."""
    if isinstance(q, DiscreteField):
        if q.grid is not grid and q.grid.shape != grid.shape:
            raise ShapeError("potential lives on a different grid")
        q = q.values
    q = np.broadcast_to(np.asarray(q, dtype=float), (grid.size,)) if np.ndim(q) == 0 else np.asarray(q, dtype=float).ravel()
    if q.size != grid.size:
        raise ShapeError(f"potential has {q.size} values, grid needs {grid.size}")
    return assemble_laplacian(geom, grid).shifted(q)


def apply(op: LinearOperator, u: DiscreteField) -> DiscreteField:
    if u.values.size != op.shape[1]:
        raise ShapeError(f"field has {u.values.size} values, operator expects {op.shape[1]}")
    out = op.matrix @ u.values + u.c1 * op.lift1 + u.c2 * op.lift2
    return DiscreteField(u.grid, out)


def assemble_fiber_laplacian(geom: WarpedGeometry, grid: Grid) -> sp.csr_matrix:
    """``Delta^N_Gamma`` on every leaf (no ``1/sigma^2`` factor), block diagonal."""
    op = assemble_laplacian(geom, grid)
    radial_only = _radial_matrix(geom, grid)
    sig2 = np.repeat(geom.sigma(grid.r) ** 2, grid.n_fiber)
    return (sp.diags(sig2) @ (op.matrix - radial_only)).tocsr()


def _radial_fluxes(geom: WarpedGeometry, grid: Grid):
    h = grid.h_r
    R, XI = grid.nodes
    up = np.exp(_log_mu(geom, R + h / 2, XI) - grid.log_mu) / h**2
    down = np.exp(_log_mu(geom, R - h / 2, XI) - grid.log_mu) / h**2
    return up, down


def _radial_matrix(geom: WarpedGeometry, grid: Grid) -> sp.csr_matrix:
    n_r, n_fib = grid.shape
    up, down = _radial_fluxes(geom, grid)
    idx = np.arange(grid.size).reshape(n_r, n_fib)
    rows = np.concatenate([idx.ravel(), idx[:-1].ravel(), idx[1:].ravel()])
    cols = np.concatenate([idx.ravel(), idx[1:].ravel(), idx[:-1].ravel()])
    vals = np.concatenate([-(up + down).ravel(), up[:-1].ravel(), down[1:].ravel()])
    return sp.coo_matrix((vals, (rows, cols)), shape=(grid.size, grid.size)).tocsr()


def apply_to_function(op: LinearOperator, fn: Callable) -> np.ndarray:
    """Apply the stencil to ``fn(r, xi)`` using its own values on the boundary leaves.

    Unlike :func:`apply`, the boundary data may vary along the leaf.
    """
    grid = op.grid
    g = grid.geom
    u = sample(grid, fn).values
    xi = grid.xi[None, :, :]
    b1 = np.broadcast_to(fn(np.array([[g.r1]]), xi), (1, grid.n_fiber)).ravel()
    b2 = np.broadcast_to(fn(np.array([[g.r2]]), xi), (1, grid.n_fiber)).ravel()
    lift1 = op.lift1.reshape(grid.shape)
    lift2 = op.lift2.reshape(grid.shape)
    out = (op.matrix @ u).reshape(grid.shape) + lift1 * b1 + lift2 * b2
    return out.ravel()
