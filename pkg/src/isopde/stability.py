"""
First Dirichlet eigenvalue of ``-L = -Delta_Psi + q`` and the properties built on it.

``-L`` is symmetric in the weighted inner product ``<u, v>_w = sum w u v``,
so the eigenproblem is solved for ``S = W^(1/2) (-L) W^(-1/2)``, which is
symmetric in the plain inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import DiscreteField, Grid, assemble_schrodinger, build_grid, sample
from .errors import EigenSolveError, PreconditionError
from .geometry import WarpedGeometry
from .nlsolve import Nonlinearity, SolveReport

TAU = 1e-6
RESIDUAL_TOL = 1e-9


@dataclass
class SpectrumResult:
    lambda1: float
    eigenfunction: DiscreteField
    rayleigh_residual: float
    classification: str

    @property
    def strongly_stable(self) -> bool:
        return self.classification == "strongly_stable"


def classify(lam: float, tau: float = TAU) -> str:
    if lam > tau:
        return "strongly_stable"
    if lam < -tau:
        return "unstable"
    return "marginal"


def weighted_norm(values, weights) -> float:
    return float(np.sqrt(np.sum(weights * values * values)))


def rayleigh_quotient(geom: WarpedGeometry, grid: Grid, q, v) -> float:
    """``<-L v, v>_w / <v, v>_w`` for a zero-boundary field ``v``."""
    op = assemble_schrodinger(geom, grid, q)
    v = v.values if isinstance(v, DiscreteField) else np.asarray(v, dtype=float)
    w = grid.weights
    return float(np.sum(w * v * -(op.matrix @ v)) / np.sum(w * v * v))


def _smallest_eigenpair(S: sp.csr_matrix, x0: np.ndarray, tol: float, max_iter: int = 2000):
    """Inverse iteration from below the spectrum, then Rayleigh-quotient refinement.

    The shift starts at a Gershgorin lower bound, so plain inverse iteration
    converges to the lowest eigenpair. Once the Rayleigh quotient settles the
    shift is moved to it (RQI). A candidate is accepted only if its vector is
    single-signed, which identifies the ground state of an irreducible
    Z-matrix.
    """
    n = S.shape[0]
    I = sp.identity(n, format="csc")
    diag = S.diagonal()
    off = np.asarray(abs(S).sum(axis=1)).ravel() - np.abs(diag)
    shift = float((diag - off).min()) - 1.0
    lu = spla.splu((S - shift * I).tocsc())
    x = x0 / np.linalg.norm(x0)
    mu = float(x @ (S @ x))
    scale = max(1.0, float(np.abs(diag).max()))

    def residual(x, mu):
        return float(np.linalg.norm(S @ x - mu * x))

    for it in range(max_iter):
        y = lu.solve(x)
        x = y / np.linalg.norm(y)
        mu_new = float(x @ (S @ x))
        settled = abs(mu_new - mu) <= 1e-6 * max(1.0, abs(mu_new))
        mu = mu_new
        if settled or it == max_iter - 1:
            break

    # Rayleigh-quotient refinement
    best = (residual(x, mu), mu, x)
    for _ in range(20):
        if best[0] <= tol:
            break
        try:
            lu_rq = spla.splu((S - (mu - 1e-10 * scale) * I).tocsc())
            y = lu_rq.solve(x)
        except RuntimeError:
            break
        if not np.all(np.isfinite(y)):
            break
        y = y / np.linalg.norm(y)
        mu_y = float(y @ (S @ y))
        if y.sum() < 0:
            y = -y
        if y.min() < -1e-8 * np.abs(y).max():
            break
        x, mu = y, mu_y
        r = residual(x, mu)
        if r < best[0]:
            best = (r, mu, x)
    res, mu, x = best

    # slow but safe fallback: finish with the lower shift
    it = 0
    while res > tol and it < max_iter:
        y = lu.solve(x)
        x = y / np.linalg.norm(y)
        mu = float(x @ (S @ x))
        res = residual(x, mu)
        it += 1
    if res > tol:
        raise EigenSolveError(f"inverse iteration stagnated at residual {res:.3e}")
    if x.sum() < 0:
        x = -x
    return mu, x, res


def lambda1(geom: WarpedGeometry, grid: Grid, q=0.0, tau: float = TAU) -> SpectrumResult:
    """Smallest eigenvalue of ``-(Delta_Psi - q)`` with Dirichlet data, and its ground state.

    The returned eigenfunction is positive with unit weighted L2 norm.
    """
    op = assemble_schrodinger(geom, grid, q)
    w = grid.weights
    sw = np.sqrt(w)
    S = (sp.diags(sw) @ (-op.matrix) @ sp.diags(1.0 / sw)).tocsr()
    S = ((S + S.T) * 0.5).tocsr()
    x0 = sw / np.linalg.norm(sw)
    # residual tolerance for the symmetric form, a bit below the weighted one
    mu, x, _ = _smallest_eigenpair(S, x0, tol=0.1 * RESIDUAL_TOL)
    phi = x / sw
    phi = phi / weighted_norm(phi, w)
    res_vec = -(op.matrix @ phi) - mu * phi
    res = weighted_norm(res_vec, w)
    if res > RESIDUAL_TOL * max(1.0, abs(mu)):
        raise EigenSolveError(f"eigen residual {res:.3e} above tolerance")
    return SpectrumResult(mu, DiscreteField(grid, phi), res, classify(mu, tau))


def check_stability(geom: WarpedGeometry, grid: Grid, report: SolveReport, f: Nonlinearity,
                    tau: float = TAU) -> SpectrumResult:
    """Stability of a converged solution: ``q = f'(u)``; stores ``lambda1`` on ``report``."""
    if not report.converged:
        raise PreconditionError("stability check needs a converged solution")
    res = lambda1(geom, grid, f.df(report.solution.values), tau)
    report.lambda1 = res.lambda1
    return res


def domain_monotonicity_check(
    geom: WarpedGeometry,
    q: Callable | float,
    shrink_fractions: Sequence[float],
    n_r: int = 64,
    n_f: int = 1,
) -> np.ndarray:
    """``lambda1`` on nested sub-annuli ``[r1 + s d, r2 - s d]`` with ``d = (r2 - r1)/4``.

    ``q`` is a constant or a callable ``q(r, xi)`` so that it can be sampled on
    each sub-annulus; every sub-annulus uses the same node counts. The output is
    expected to be non-decreasing for increasing ``s``.
    """
    fr = np.asarray(shrink_fractions, dtype=float)
    if np.any(fr < 0) or np.any(fr > 1):
        raise PreconditionError("shrink fractions must lie in [0, 1]")
    d = (geom.r2 - geom.r1) / 4
    out = []
    for s in fr:
        sub = geom.with_interval(geom.r1 + s * d, geom.r2 - s * d)
        grid = build_grid(sub, n_r, n_f)
        qv = sample(grid, q).values if callable(q) else q
        out.append(lambda1(sub, grid, qv).lambda1)
    return np.array(out)


def maximum_principle_check(
    geom: WarpedGeometry,
    grid: Grid,
    q,
    v: DiscreteField,
    enforce_precondition: bool = True,
) -> bool:
    """True iff ``v <= 1e-10`` given ``v <= 0`` on the boundary and ``L v >= 0``.

    With ``lambda1(-L) <= 0`` the principle is not guaranteed; that raises
    unless ``enforce_precondition`` is False (used to exhibit counterexamples).
    """
    if max(v.c1, v.c2) > 0:
        raise PreconditionError("v must be <= 0 on the boundary")
    op = assemble_schrodinger(geom, grid, q)
    Lv = op.matrix @ v.values + v.c1 * op.lift1 + v.c2 * op.lift2
    if Lv.min() < -1e-12 * max(1.0, np.abs(Lv).max()):
        raise PreconditionError("L v >= 0 does not hold at every node")
    if enforce_precondition:
        lam = lambda1(geom, grid, q).lambda1
        if lam <= 0:
            raise PreconditionError(f"lambda1(-L) = {lam:.3e} <= 0; maximum principle not guaranteed")
    return bool(v.values.max() <= 1e-10)


def dirichlet_eigenvalue_flat(width: float, k: int = 1) -> float:
    """``(k pi / width)^2``, the exact 1D Dirichlet eigenvalue."""
    return (k * math.pi / width) ** 2
